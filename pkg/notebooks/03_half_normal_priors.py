"""
Half-normal priors for tau
==========================

HN(0.5) and HN(1.0) are the two heterogeneity priors used for log odds
ratios. Their medians and 95% intervals follow from normal quantiles, and
the posterior for tau is computed on a fixed grid after integrating mu out
analytically.
"""

import numpy as np

from nnhm.bayesian import HalfNormalPrior, bayes_analysis, prior_quantiles
from nnhm.frequentist import Dataset
from nnhm.report import load_example

# %%
# Prior summaries.
for scale in (0.5, 1.0):
    med, lo, hi = prior_quantiles(HalfNormalPrior(scale))
    print(f"HN({scale}): median {med:.3f}, 95% interval ({lo:.3f}, {hi:.2f})")

# %%
# With very uninformative data the posterior of tau is just the prior.
vague = Dataset.from_arrays([0.3, -1.2], [1e4, 1e4])
print("posterior median with vague data:", bayes_analysis(vague, HalfNormalPrior(0.5)).tau_median)

# %%
# On the Romiplostim data both posterior medians of tau fall below the
# prior medians, so neither prior forces heterogeneity into the analysis.
romi = load_example("romiplostim")
for scale in (0.5, 1.0):
    res = bayes_analysis(romi, HalfNormalPrior(scale))
    ci = res.interval
    print(f"HN({scale}): tau median {res.tau_median:.3f}, mu {ci.estimate:.3f} ({ci.lower:.3f}, {ci.upper:.3f})")

# %%
# The posterior density of tau on its grid, summarised at a few nodes.
res = bayes_analysis(romi, HalfNormalPrior(1.0))
nodes, dens = res.tau_post.grid.nodes, res.tau_post.density
for t in (0.0, 0.25, 0.5, 1.0, 2.0):
    i = int(np.argmin(np.abs(nodes - t)))
    print(f"tau = {nodes[i]:.2f}: density {dens[i]:.4f}")
