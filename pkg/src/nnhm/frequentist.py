"""DerSimonian-Laird heterogeneity and the DL-normal, HKSJ and mKH intervals."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .effects import StudyEstimate
from .numerics import normal_quantile, student_t_quantile

DL_NORMAL = "DL-normal"
HKSJ = "HKSJ"
MKH = "mKH"
FREQUENTIST_METHODS = (DL_NORMAL, HKSJ, MKH)


@dataclass(frozen=True)
class Dataset:
    """An ordered collection of at least two study estimates."""

    studies: tuple[StudyEstimate, ...]

    def __init__(self, studies: Iterable[StudyEstimate]):
        studies = tuple(studies)
        if len(studies) < 2:
            raise ValueError(f"a meta-analysis needs at least two studies, got {len(studies)}")
        object.__setattr__(self, "studies", studies)

    @classmethod
    def from_arrays(cls, y: Sequence[float], s: Sequence[float], labels: Sequence[str] | None = None):
        if len(y) != len(s):
            raise ValueError("y and s must have the same length")
        labels = labels if labels is not None else [f"Study {j + 1}" for j in range(len(y))]
        return cls(StudyEstimate(str(lab), float(yj), float(sj)) for lab, yj, sj in zip(labels, y, s))

    def __len__(self) -> int:
        return len(self.studies)

    def __iter__(self):
        return iter(self.studies)

    @property
    def k(self) -> int:
        return len(self.studies)

    @property
    def y(self) -> np.ndarray:
        return np.array([st.y for st in self.studies])

    @property
    def s(self) -> np.ndarray:
        return np.array([st.s for st in self.studies])

    @property
    def labels(self) -> list[str]:
        return [st.label for st in self.studies]


@dataclass(frozen=True)
class PooledFit:
    """Inverse-variance pooling at a fixed heterogeneity ``tau``.

    ``sigma_hat`` is the classical standard error ``1/sqrt(sum w)``;
    ``sigma_tilde`` is the Hartung-Knapp residual-based one.
    """

    tau_hat: float
    weights: np.ndarray
    mu_hat: float
    sigma_hat: float
    sigma_tilde: float


@dataclass(frozen=True)
class IntervalResult:
    method: str
    estimate: float
    lower: float
    upper: float
    level: float = 0.95

    def __post_init__(self):
        if not self.lower <= self.estimate <= self.upper:
            raise ValueError(
                f"{self.method}: interval ({self.lower}, {self.upper}) does not contain {self.estimate}"
            )

    @property
    def length(self) -> float:
        return self.upper - self.lower

    def contains(self, value: float) -> bool:
        return self.lower <= value <= self.upper


def _moment_scale(w: np.ndarray) -> float:
    """``sum(w) - sum(w^2)/sum(w)`` written as a sum of positive terms.

    The direct difference cancels badly when one weight dominates.
    """
    others = (1.0 - np.eye(w.size)) @ w
    return float(np.dot(w, others) / w.sum())


def _dl_tau2_moment(y: np.ndarray, s: np.ndarray) -> float:
    w = 1.0 / s**2
    sw = w.sum()
    ybar = np.dot(w, y) / sw
    q = np.dot(w, (y - ybar) ** 2)
    return (q - (y.size - 1)) / _moment_scale(w)


def dl_tau(data: Dataset) -> float:
    """DerSimonian-Laird moment estimate of tau, truncated at zero.

    Two studies use the closed form ``((y1 - y2)^2 - s1^2 - s2^2) / 2`` for
    tau squared; the general moment estimator reduces to the same value.
    """
    y, s = data.y, data.s
    if data.k == 2:
        tau2 = ((y[0] - y[1]) ** 2 - s[0] ** 2 - s[1] ** 2) / 2
    else:
        tau2 = _dl_tau2_moment(y, s)
    return float(np.sqrt(tau2)) if tau2 > 0 else 0.0


def pooled_fit(data: Dataset, tau: float) -> PooledFit:
    if tau < 0:
        raise ValueError(f"tau must be nonnegative, got {tau}")
    y, s = data.y, data.s
    w = 1.0 / (s**2 + tau**2)
    sw = w.sum()
    mu = float(np.dot(w, y) / sw)
    sigma_tilde2 = np.dot(w, (y - mu) ** 2) / sw / (data.k - 1)
    return PooledFit(
        tau_hat=float(tau),
        weights=w,
        mu_hat=mu,
        sigma_hat=float(np.sqrt(1.0 / sw)),
        sigma_tilde=float(np.sqrt(sigma_tilde2)),
    )


def _check_level(level: float) -> None:
    if not 0 < level < 1:
        raise ValueError(f"level must lie in (0, 1), got {level}")


def _symmetric(method: str, centre: float, half_width: float, level: float) -> IntervalResult:
    return IntervalResult(method, centre, centre - half_width, centre + half_width, level)


def ci_dl_normal(data: Dataset, level: float = 0.95, fit: PooledFit | None = None) -> IntervalResult:
    _check_level(level)
    fit = fit or pooled_fit(data, dl_tau(data))
    z = normal_quantile(0.5 * (1 + level))
    return _symmetric(DL_NORMAL, fit.mu_hat, fit.sigma_hat * z, level)


def ci_hksj(data: Dataset, level: float = 0.95, fit: PooledFit | None = None) -> IntervalResult:
    _check_level(level)
    fit = fit or pooled_fit(data, dl_tau(data))
    t = student_t_quantile(0.5 * (1 + level), data.k - 1)
    return _symmetric(HKSJ, fit.mu_hat, fit.sigma_tilde * t, level)


def ci_mkh(data: Dataset, level: float = 0.95, fit: PooledFit | None = None) -> IntervalResult:
    """HKSJ interval with its standard error floored at the classical one."""
    _check_level(level)
    fit = fit or pooled_fit(data, dl_tau(data))
    t = student_t_quantile(0.5 * (1 + level), data.k - 1)
    return _symmetric(MKH, fit.mu_hat, max(fit.sigma_hat, fit.sigma_tilde) * t, level)


def frequentist_intervals(data: Dataset, level: float = 0.95) -> tuple[PooledFit, dict[str, IntervalResult]]:
    """All three intervals sharing one DL fit."""
    fit = pooled_fit(data, dl_tau(data))
    return fit, {
        DL_NORMAL: ci_dl_normal(data, level, fit),
        HKSJ: ci_hksj(data, level, fit),
        MKH: ci_mkh(data, level, fit),
    }


def batch_frequentist(y: np.ndarray, s: np.ndarray, level: float = 0.95) -> dict[str, np.ndarray]:
    """DL fit and the three intervals for many datasets sharing standard errors.

    ``y`` has shape ``(m, k)`` and ``s`` shape ``(k,)``. The result maps
    ``tau_hat``, ``mu_hat``, ``sigma_hat``, ``sigma_tilde`` and
    ``<method>_lower`` / ``<method>_upper`` to arrays of length ``m``.
    """
    _check_level(level)
    y = np.atleast_2d(np.asarray(y, dtype=float))
    s = np.asarray(s, dtype=float)
    k = y.shape[1]
    if k < 2 or s.shape != (k,):
        raise ValueError("need at least two studies and one standard error per study")
    if k == 2:
        tau2 = ((y[:, 0] - y[:, 1]) ** 2 - s[0] ** 2 - s[1] ** 2) / 2
    else:
        w0 = 1.0 / s**2
        ybar = y @ w0 / w0.sum()
        q = ((y - ybar[:, None]) ** 2) @ w0
        tau2 = (q - (k - 1)) / _moment_scale(w0)
    tau2 = np.where(tau2 > 0, tau2, 0.0)
    w = 1.0 / (s**2 + tau2[:, None])
    sw = w.sum(axis=1)
    mu = np.sum(w * y, axis=1) / sw
    sigma_hat = np.sqrt(1.0 / sw)
    sigma_tilde = np.sqrt(np.sum(w * (y - mu[:, None]) ** 2, axis=1) / sw / (k - 1))
    z = normal_quantile(0.5 * (1 + level))
    t = student_t_quantile(0.5 * (1 + level), k - 1)
    out = {"tau_hat": np.sqrt(tau2), "mu_hat": mu, "sigma_hat": sigma_hat, "sigma_tilde": sigma_tilde}
    for method, half in (
        (DL_NORMAL, sigma_hat * z),
        (HKSJ, sigma_tilde * t),
        (MKH, np.maximum(sigma_hat, sigma_tilde) * t),
    ):
        out[f"{method}_lower"] = mu - half
        out[f"{method}_upper"] = mu + half
    return out
