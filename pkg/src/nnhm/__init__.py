"""Random-effects meta-analysis of few studies in the normal-normal hierarchical model."""

__version__ = "0.1.0"

from .bayesian import (
    HalfNormalPrior,
    MuPosterior,
    TauPosterior,
    bayes_analysis,
    credible_interval,
    mu_posterior,
    prior_quantiles,
    tau_posterior,
    tau_posterior_median,
)
from .effects import (
    OddsRatioSummary,
    StudyEstimate,
    TwoByTwo,
    estimate_from_or_ci,
    log_or_from_counts,
    or_scale,
)
from .frequentist import (
    Dataset,
    IntervalResult,
    PooledFit,
    ci_dl_normal,
    ci_hksj,
    ci_mkh,
    dl_tau,
    pooled_fit,
)
from .report import AnalysisRequest, analyze, load_example, parse_dataset
from .simulation import Scenario, ScenarioResult, run_grid, run_scenario
