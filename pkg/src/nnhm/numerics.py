"""Special functions, fixed-grid quadrature and bracketed root finding.

Everything here is a pure function of its inputs. Array arguments are
accepted wherever a scalar is, and the result has the broadcast shape.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import special

__all__ = [
    "BracketError",
    "NumericalError",
    "GridQuadrature",
    "normal_cdf",
    "normal_pdf",
    "normal_quantile",
    "student_t_quantile",
    "trapezoid_grid",
    "integrate",
    "find_root",
    "mixture_quantiles",
]

DEFAULT_ROOT_TOL = 1e-10


class NumericalError(ArithmeticError):
    """A computation produced a non-finite or otherwise unusable value."""


class BracketError(ValueError):
    """The function does not change sign over the supplied bracket."""


def normal_cdf(x):
    """Standard normal distribution function."""
    return special.ndtr(x)


def normal_pdf(x):
    x = np.asarray(x, dtype=float)
    return np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)


def _check_probability(p) -> np.ndarray:
    arr = np.asarray(p, dtype=float)
    if not np.all((arr > 0.0) & (arr < 1.0)):
        raise ValueError(f"probability must lie strictly inside (0, 1), got {p!r}")
    return arr


def normal_quantile(p):
    """Inverse of :func:`normal_cdf` on the open unit interval.

    Raises
    ------
    ValueError
        If any ``p`` is outside ``(0, 1)``.
    """
    arr = _check_probability(p)
    out = special.ndtri(arr)
    return float(out) if out.ndim == 0 else out


def student_t_quantile(p, df: int):
    """p-quantile of Student's t with ``df`` degrees of freedom.

    One and two degrees of freedom use their closed forms; larger ``df``
    goes through the inverse incomplete beta function.
    """
    arr = _check_probability(p)
    if int(df) != df or df < 1:
        raise ValueError(f"degrees of freedom must be a positive integer, got {df!r}")
    if df == 1:
        out = np.tan(np.pi * (arr - 0.5))
    elif df == 2:
        out = (2.0 * arr - 1.0) / np.sqrt(2.0 * arr * (1.0 - arr))
    else:
        # solve in the lower tail so that q(1 - p) = -q(p) holds to rounding
        lower = -special.stdtrit(df, np.minimum(arr, 1.0 - arr))
        out = np.where(arr < 0.5, -lower, lower)
    out = np.where(arr == 0.5, 0.0, out)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class GridQuadrature:
    """Fixed quadrature rule: ``sum(weights * f(nodes))``."""

    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        if nodes.ndim != 1 or nodes.shape != weights.shape:
            raise ValueError("nodes and weights must be 1-d arrays of equal length")
        if nodes.size < 2:
            raise ValueError("a quadrature grid needs at least two nodes")
        if np.any(np.diff(nodes) <= 0):
            raise ValueError("quadrature nodes must be strictly increasing")
        if np.any(weights < 0):
            raise ValueError("quadrature weights must be nonnegative")
        nodes.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    def __len__(self) -> int:
        return self.nodes.size

    @property
    def lower(self) -> float:
        return float(self.nodes[0])

    @property
    def upper(self) -> float:
        return float(self.nodes[-1])


def trapezoid_grid(lower: float, upper: float, n: int) -> GridQuadrature:
    """Equally spaced trapezoid rule with ``n`` nodes on ``[lower, upper]``."""
    if n < 2:
        raise ValueError(f"grid size must be at least 2, got {n}")
    if not upper > lower:
        raise ValueError(f"empty integration interval [{lower}, {upper}]")
    nodes = np.linspace(lower, upper, n)
    h = (upper - lower) / (n - 1)
    weights = np.full(n, h)
    weights[0] = weights[-1] = 0.5 * h
    return GridQuadrature(nodes, weights)


def integrate(f: Callable[[np.ndarray], np.ndarray], grid: GridQuadrature) -> float:
    """Apply the quadrature rule to ``f``, which is called once on all nodes."""
    values = np.broadcast_to(np.asarray(f(grid.nodes), dtype=float), grid.nodes.shape)
    if not np.all(np.isfinite(values)):
        bad = grid.nodes[~np.isfinite(values)]
        raise NumericalError(f"integrand is not finite at {bad.size} node(s), first at {bad[0]!r}")
    return float(np.dot(grid.weights, values))


def find_root(
    f: Callable[[float], float], lo: float, hi: float, tol: float = DEFAULT_ROOT_TOL
) -> float:
    """Bisection on a sign-changing bracket until its width is at most ``tol``."""
    if not lo < hi:
        raise ValueError(f"invalid bracket [{lo}, {hi}]")
    if tol <= 0:
        raise ValueError("tolerance must be positive")
    flo, fhi = f(lo), f(hi)
    if not (math.isfinite(flo) and math.isfinite(fhi)):
        raise NumericalError(f"function not finite at bracket ends ({flo}, {fhi})")
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if (flo > 0) == (fhi > 0):
        raise BracketError(f"f({lo}) = {flo} and f({hi}) = {fhi} have the same sign")
    while hi - lo > tol:
        mid = lo + 0.5 * (hi - lo)
        if mid <= lo or mid >= hi:
            break  # bracket is at floating-point resolution
        fmid = f(mid)
        if fmid == 0.0:
            return mid
        if (fmid > 0) == (flo > 0):
            lo, flo = mid, fmid
        else:
            hi = mid
    return lo + 0.5 * (hi - lo)


def mixture_quantiles(
    p: float,
    means: np.ndarray,
    sds: np.ndarray,
    weights: np.ndarray,
    tol: float = DEFAULT_ROOT_TOL,
    max_iter: int = 200,
    bracket_sds: float = 20.0,
) -> np.ndarray:
    """Row-wise p-quantiles of a batch of normal mixtures.

    Row ``i`` is the mixture ``sum_j weights[i, j] * N(means[i, j], sds[..., j]**2)``.
    ``sds`` may be shared across rows (shape ``(n_components,)``). Each row
    is solved by Newton's method safeguarded with bisection inside the
    bracket ``mean +/- bracket_sds * sd`` of the mixture. Rows whose quantile
    is outside that bracket come back as NaN.
    """
    means = np.atleast_2d(np.asarray(means, dtype=float))
    weights = np.atleast_2d(np.asarray(weights, dtype=float))
    sds = np.asarray(sds, dtype=float)
    sds_2d = np.broadcast_to(sds, means.shape)

    centre = np.sum(weights * means, axis=1)
    spread = np.sqrt(np.maximum(np.sum(weights * (sds_2d**2 + means**2), axis=1) - centre**2, 0.0))
    spread = np.maximum(spread, np.min(sds_2d, axis=1))
    lo = centre - bracket_sds * spread
    hi = centre + bracket_sds * spread

    def cdf_pdf(x, rows):
        sd = sds if sds.ndim == 1 else sds[rows]
        z = (x[:, None] - means[rows]) / sd
        w = weights[rows]
        return np.sum(w * special.ndtr(z), axis=1), np.sum(w * normal_pdf(z) / sd, axis=1)

    result = np.full(means.shape[0], np.nan)
    resid = np.full(means.shape[0], np.nan)
    x = np.clip(centre + float(normal_quantile(p)) * spread, lo, hi)
    active = np.arange(means.shape[0])
    for _ in range(max_iter):
        if active.size == 0:
            break
        xa = x[active]
        cdf, pdf = cdf_pdf(xa, active)
        below = cdf < p
        lo[active] = np.where(below, xa, lo[active])
        hi[active] = np.where(below, hi[active], xa)
        with np.errstate(divide="ignore", invalid="ignore"):
            x_new = xa - (cdf - p) / pdf
        x_new = np.where(cdf == p, xa, x_new)
        la, ha = lo[active], hi[active]
        done = (np.abs(x_new - xa) <= tol) | (ha - la <= tol)
        bisect = ~done & (~np.isfinite(x_new) | (x_new <= la) | (x_new >= ha))
        x_new = np.where(bisect, la + 0.5 * (ha - la), x_new)
        x[active] = x_new
        result[active[done]] = x_new[done]
        resid[active[done]] = cdf[done] - p
        active = active[~done]
    result[active] = x[active]
    # a quantile outside the bracket leaves the iteration pinned at an end
    # with the distribution function still far from p
    result[~(np.abs(resid) <= 1e-8)] = np.nan
    return result
