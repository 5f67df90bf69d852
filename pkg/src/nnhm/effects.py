"""Log-odds-ratio study estimates from 2x2 tables or published OR summaries."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import TYPE_CHECKING

from .numerics import normal_quantile

if TYPE_CHECKING:
    from .frequentist import IntervalResult

CONTINUITY_RULES = ("none", "half")


class DegenerateTableError(ValueError):
    """A 2x2 table has an empty cell and no continuity correction applies."""


@dataclass(frozen=True)
class StudyEstimate:
    """A single study's effect estimate ``y`` and its standard error ``s``."""

    label: str
    y: float
    s: float

    def __post_init__(self):
        if not math.isfinite(self.y):
            raise ValueError(f"{self.label}: estimate must be finite, got {self.y}")
        if not (math.isfinite(self.s) and self.s > 0):
            raise ValueError(f"{self.label}: standard error must be positive, got {self.s}")


@dataclass(frozen=True)
class TwoByTwo:
    """Responders ``r`` out of ``n`` subjects in treatment (T) and control (C)."""

    r_t: int
    n_t: int
    r_c: int
    n_c: int
    label: str = ""

    def __post_init__(self):
        if self.n_t < 1 or self.n_c < 1:
            raise ValueError(f"{self.label}: arm sizes must be at least 1")
        if not (0 <= self.r_t <= self.n_t and 0 <= self.r_c <= self.n_c):
            raise ValueError(f"{self.label}: responder counts must lie in [0, n]")

    def swapped(self) -> "TwoByTwo":
        """Same table with treatment and control exchanged."""
        return TwoByTwo(self.r_c, self.n_c, self.r_t, self.n_t, self.label)

    def relabelled(self) -> "TwoByTwo":
        """Same table with responders and non-responders exchanged in both arms."""
        return TwoByTwo(self.n_t - self.r_t, self.n_t, self.n_c - self.r_c, self.n_c, self.label)


@dataclass(frozen=True)
class OddsRatioSummary:
    """A published odds ratio with its confidence interval."""

    odds_ratio: float
    ci_lo: float
    ci_hi: float
    level: float = 0.95
    label: str = ""

    def __post_init__(self):
        if min(self.odds_ratio, self.ci_lo, self.ci_hi) <= 0:
            raise ValueError(f"{self.label}: odds ratio and bounds must be positive")
        if not self.ci_lo < self.odds_ratio < self.ci_hi:
            raise ValueError(f"{self.label}: need ci_lo < OR < ci_hi")
        if not 0 < self.level < 1:
            raise ValueError(f"{self.label}: level must lie in (0, 1)")


def log_or_from_counts(table: TwoByTwo, correction: str = "half") -> StudyEstimate:
    """Log odds ratio and its Woolf standard error.

    With ``correction="half"`` 0.5 is added to all four cells whenever any
    cell is empty; ``"none"`` raises :class:`DegenerateTableError` instead.
    """
    if correction not in CONTINUITY_RULES:
        raise ValueError(f"unknown continuity rule {correction!r}; use one of {CONTINUITY_RULES}")
    a, b = float(table.r_t), float(table.n_t - table.r_t)
    c, d = float(table.r_c), float(table.n_c - table.r_c)
    if min(a, b, c, d) == 0:
        if correction == "none":
            raise DegenerateTableError(f"{table.label}: 2x2 table has an empty cell")
        a, b, c, d = a + 0.5, b + 0.5, c + 0.5, d + 0.5
    # grouped per arm so that swapping arms or outcomes negates y bit for bit
    y = (math.log(a) - math.log(b)) - (math.log(c) - math.log(d))
    s = math.sqrt((1 / a + 1 / b) + (1 / c + 1 / d))
    return StudyEstimate(table.label, y, s)


def estimate_from_or_ci(summary: OddsRatioSummary) -> StudyEstimate:
    """Recover ``(y, s)`` on the log scale from an odds ratio and its symmetric-on-log CI."""
    z = normal_quantile(0.5 * (1 + summary.level))
    y = math.log(summary.odds_ratio)
    s = (math.log(summary.ci_hi) - math.log(summary.ci_lo)) / (2 * z)
    return StudyEstimate(summary.label, y, s)


def or_scale(interval: "IntervalResult") -> "IntervalResult":
    """Exponentiate an interval on the log-odds-ratio scale."""
    return replace(
        interval,
        estimate=math.exp(interval.estimate),
        lower=math.exp(interval.lower),
        upper=math.exp(interval.upper),
    )
