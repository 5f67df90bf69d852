"""Bayesian inference in the normal-normal hierarchical model.

The overall effect ``mu`` has a flat prior and is integrated out in closed
form, which leaves a one-dimensional posterior for ``tau`` evaluated on a
fixed grid. Given ``tau`` the posterior of ``mu`` is normal, so the marginal
posterior of ``mu`` is a finite mixture of normals, one per grid node.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .frequentist import Dataset, IntervalResult
from .numerics import (
    GridQuadrature,
    NumericalError,
    find_root,
    mixture_quantiles,
    normal_cdf,
    normal_quantile,
    trapezoid_grid,
)

DEFAULT_GRID_SIZE = 4001
DEFAULT_UPPER_SCALES = 5.0
BRACKET_SDS = 20.0


@dataclass(frozen=True)
class HalfNormalPrior:
    """Half-normal prior on tau; ``scale`` is the SD of the parent normal."""

    scale: float

    def __post_init__(self):
        if not (math.isfinite(self.scale) and self.scale > 0):
            raise ValueError(f"half-normal scale must be positive, got {self.scale}")

    @property
    def label(self) -> str:
        scale = f"{self.scale:.1f}" if round(self.scale, 1) == self.scale else f"{self.scale:g}"
        return f"Bayes-HN({scale})"

    def log_density(self, tau):
        tau = np.asarray(tau, dtype=float)
        return -0.5 * (tau / self.scale) ** 2

    def grid(self, size: int = DEFAULT_GRID_SIZE, upper_scales: float = DEFAULT_UPPER_SCALES) -> GridQuadrature:
        return trapezoid_grid(0.0, upper_scales * self.scale, size)


@dataclass(frozen=True)
class TauPosterior:
    """Normalised posterior density of tau on the nodes of ``grid``."""

    grid: GridQuadrature
    density: np.ndarray

    def cdf(self) -> np.ndarray:
        """Cumulative mass at each node, integrating the piecewise-linear density."""
        return _cumulative_trapezoid(self.grid.nodes, self.density)


@dataclass(frozen=True)
class MuPosterior:
    """Normal mixture: component ``i`` is ``N(means[i], sds[i]**2)`` with mass ``weights[i]``."""

    means: np.ndarray
    sds: np.ndarray
    weights: np.ndarray

    def cdf(self, x: float) -> float:
        return float(np.dot(self.weights, normal_cdf((x - self.means) / self.sds)))

    @property
    def mean(self) -> float:
        return float(np.dot(self.weights, self.means))

    @property
    def sd(self) -> float:
        second = np.dot(self.weights, self.sds**2 + self.means**2)
        return math.sqrt(max(second - self.mean**2, 0.0))


def prior_quantiles(prior: HalfNormalPrior) -> tuple[float, float, float]:
    """Median and central 95% interval of the half-normal prior."""
    q = lambda p: prior.scale * normal_quantile(0.5 * (1 + p))  # noqa: E731
    return q(0.5), q(0.025), q(0.975)


def _conditional_moments(y: np.ndarray, s: np.ndarray, tau: np.ndarray):
    """Per-node weights sum, conditional mean of mu and log marginal likelihood.

    ``y`` has shape ``(..., k)``; results have shape ``(..., n_nodes)``.
    """
    w = 1.0 / (s**2 + tau[:, None] ** 2)  # (G, k)
    sw = w.sum(axis=1)  # (G,)
    mu = (y @ w.T) / sw  # (..., G)
    resid = y[..., None, :] - mu[..., None]  # (..., G, k)
    quad = np.sum(w * resid**2, axis=-1)
    loglik = 0.5 * np.log(w).sum(axis=1) - 0.5 * np.log(sw) - 0.5 * quad
    return sw, mu, loglik


def _normalise(log_post: np.ndarray, weights: np.ndarray) -> np.ndarray:
    log_post = log_post - np.max(log_post, axis=-1, keepdims=True)
    dens = np.exp(log_post)
    total = dens @ weights
    if np.any(~np.isfinite(total)) or np.any(total <= 0):
        raise NumericalError("tau posterior could not be normalised")
    return dens / np.asarray(total)[..., None]


def _cumulative_trapezoid(nodes: np.ndarray, density: np.ndarray) -> np.ndarray:
    h = np.diff(nodes)
    pieces = 0.5 * h * (density[..., 1:] + density[..., :-1])
    out = np.zeros(density.shape)
    out[..., 1:] = np.cumsum(pieces, axis=-1)
    return out


def _crossing(nodes: np.ndarray, cdf: np.ndarray, p: float) -> np.ndarray:
    """Linearly interpolated first crossing of level ``p`` along the last axis."""
    cdf = cdf / cdf[..., -1:]
    idx = np.argmax(cdf >= p, axis=-1)
    idx = np.maximum(idx, 1)
    c0 = np.take_along_axis(cdf, (idx - 1)[..., None], -1)[..., 0]
    c1 = np.take_along_axis(cdf, idx[..., None], -1)[..., 0]
    t0, t1 = nodes[idx - 1], nodes[idx]
    with np.errstate(invalid="ignore", divide="ignore"):
        frac = np.where(c1 > c0, (p - c0) / (c1 - c0), 0.0)
    return t0 + np.clip(frac, 0.0, 1.0) * (t1 - t0)


def tau_posterior(
    data: Dataset,
    prior: HalfNormalPrior,
    grid_size: int = DEFAULT_GRID_SIZE,
    upper_scales: float = DEFAULT_UPPER_SCALES,
) -> TauPosterior:
    """Marginal posterior of tau, with mu integrated out under its flat prior."""
    grid = prior.grid(grid_size, upper_scales)
    _, _, loglik = _conditional_moments(data.y, data.s, grid.nodes)
    density = _normalise(loglik + prior.log_density(grid.nodes), grid.weights)
    return TauPosterior(grid, density)


def mu_posterior(data: Dataset, tp: TauPosterior) -> MuPosterior:
    sw, mu, _ = _conditional_moments(data.y, data.s, tp.grid.nodes)
    mass = tp.grid.weights * tp.density
    return MuPosterior(means=mu, sds=1.0 / np.sqrt(sw), weights=mass / mass.sum())


def tau_posterior_median(tp: TauPosterior) -> float:
    return float(_crossing(tp.grid.nodes, tp.cdf(), 0.5))


def mixture_quantile(mp: MuPosterior, p: float, tol: float = 1e-10) -> float:
    """p-quantile of the mixture by bisection inside +/-20 mixture SDs."""
    centre, spread = mp.mean, max(mp.sd, float(np.min(mp.sds)))
    lo, hi = centre - BRACKET_SDS * spread, centre + BRACKET_SDS * spread
    if mp.cdf(lo) > p or mp.cdf(hi) < p:
        raise NumericalError(
            f"{p}-quantile lies outside {BRACKET_SDS:g} mixture SDs of the mean ({lo}, {hi})"
        )
    return find_root(lambda x: mp.cdf(x) - p, lo, hi, tol)


def credible_interval(mp: MuPosterior, level: float = 0.95, method: str = "Bayes") -> IntervalResult:
    """Central credible interval for mu; the point estimate is the posterior median."""
    if not 0 < level < 1:
        raise ValueError(f"level must lie in (0, 1), got {level}")
    lower = mixture_quantile(mp, 0.5 * (1 - level))
    upper = mixture_quantile(mp, 0.5 * (1 + level))
    median = mixture_quantile(mp, 0.5)
    return IntervalResult(method, median, lower, upper, level)


@dataclass(frozen=True)
class BayesResult:
    prior: HalfNormalPrior
    interval: IntervalResult
    tau_median: float
    tau_post: TauPosterior
    mu_post: MuPosterior


def bayes_analysis(
    data: Dataset,
    prior: HalfNormalPrior,
    level: float = 0.95,
    grid_size: int = DEFAULT_GRID_SIZE,
    upper_scales: float = DEFAULT_UPPER_SCALES,
) -> BayesResult:
    tp = tau_posterior(data, prior, grid_size, upper_scales)
    mp = mu_posterior(data, tp)
    return BayesResult(
        prior=prior,
        interval=credible_interval(mp, level, method=prior.label),
        tau_median=tau_posterior_median(tp),
        tau_post=tp,
        mu_post=mp,
    )


def batch_bayes(
    y: np.ndarray,
    s: np.ndarray,
    prior: HalfNormalPrior,
    level: float = 0.95,
    grid_size: int = DEFAULT_GRID_SIZE,
    upper_scales: float = DEFAULT_UPPER_SCALES,
    median: bool = True,
) -> dict[str, np.ndarray]:
    """Vectorised posterior summaries for many datasets sharing standard errors.

    ``y`` has shape ``(m, k)``. Returns arrays of length ``m`` under the keys
    ``lower``, ``upper``, ``median`` (of mu, skipped when ``median`` is false)
    and ``tau_median``. Quantiles that cannot be bracketed come back as NaN.
    """
    y = np.atleast_2d(np.asarray(y, dtype=float))
    s = np.asarray(s, dtype=float)
    grid = prior.grid(grid_size, upper_scales)
    sw, mu, loglik = _conditional_moments(y, s, grid.nodes)
    density = _normalise(loglik + prior.log_density(grid.nodes), grid.weights)
    mass = density * grid.weights
    mass /= mass.sum(axis=1, keepdims=True)
    sds = 1.0 / np.sqrt(sw)
    out = {
        "lower": mixture_quantiles(0.5 * (1 - level), mu, sds, mass, bracket_sds=BRACKET_SDS),
        "upper": mixture_quantiles(0.5 * (1 + level), mu, sds, mass, bracket_sds=BRACKET_SDS),
        "tau_median": _crossing(grid.nodes, _cumulative_trapezoid(grid.nodes, density), 0.5),
    }
    if median:
        out["median"] = mixture_quantiles(0.5, mu, sds, mass, bracket_sds=BRACKET_SDS)
    return out
