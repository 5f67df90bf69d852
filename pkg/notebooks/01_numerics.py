"""
Quantiles, quadrature and root finding
======================================

The interval rules need a handful of numerical building blocks: normal and
Student-t quantiles, a fixed trapezoid grid for integrating over tau, and a
bracketing root finder for inverting a mixture CDF. This script exercises
each of them on cases with known answers.
"""

import math

import numpy as np

from nnhm.numerics import (
    find_root,
    integrate,
    mixture_quantiles,
    normal_cdf,
    normal_pdf,
    normal_quantile,
    student_t_quantile,
    trapezoid_grid,
)

# %%
# Normal quantiles. The 97.5% point is the familiar 1.96 of a 95% interval.
for p in (0.5, 0.75, 0.975):
    print(f"z({p}) = {normal_quantile(p):.6f}")

# %%
# With two studies the HKSJ interval uses a t quantile with one degree of
# freedom. That is the Cauchy distribution, and its 97.5% point is about
# 12.7, which explains how wide two-study HKSJ intervals get.
for df in (1, 2, 5, 30, 10**6):
    print(f"t_{df}(0.975) = {student_t_quantile(0.975, df):.4f}")
print("tan(0.475 pi) =", math.tan(0.475 * math.pi))

# %%
# A fixed trapezoid grid integrates the normal density over [0, 8].
grid = trapezoid_grid(0.0, 8.0, 20001)
print("integral of phi on [0, 8]:", integrate(normal_pdf, grid))

# %%
# Bisection recovers the normal quantile from the CDF alone.
print("root of Phi(x) - 0.975:", find_root(lambda x: normal_cdf(x) - 0.975, 0.0, 10.0))

# %%
# Mixture quantiles: two narrow components at -1 and +1 put the 2.5% and
# 97.5% points right at the components.
means = np.array([[-1.0, 1.0]])
weights = np.array([[0.5, 0.5]])
for p in (0.025, 0.5, 0.975):
    print(p, mixture_quantiles(p, means, np.array([1e-6, 1e-6]), weights)[0])
