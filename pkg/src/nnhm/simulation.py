"""Monte Carlo study of interval procedures for two studies.

Study estimates are drawn from the hierarchical model with standard errors
``2/sqrt(n)``; every replicate is analysed with the DL estimator, the three
frequentist intervals and one Bayesian analysis per half-normal prior.

Random numbers come from a Philox counter-based generator keyed by
``(seed, scenario index, chunk index)``, with replicates processed in
fixed-size chunks. A chunk's draws therefore do not depend on how the work
is spread over processes, and a run with eight workers reproduces a
sequential run bit for bit.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .bayesian import HalfNormalPrior, batch_bayes
from .frequentist import FREQUENTIST_METHODS, batch_frequentist
from .numerics import normal_cdf, normal_quantile

log = logging.getLogger(__name__)

CHUNK_SIZE = 500
SIM_GRID_SIZE = 801
DESIGN_SIZES = ((25, 25), (100, 100), (400, 400), (25, 100), (100, 400), (25, 400))
DESIGN_TAUS = (0.0, 0.1, 0.2, 0.5, 1.0)
DEFAULT_PRIORS = (0.5, 1.0)
DL = "DL"


@dataclass(frozen=True)
class Scenario:
    """One cell of the simulation design.

    ``index`` distinguishes scenarios that share a ``seed`` so that each
    gets its own random stream.
    """

    n1: int
    n2: int
    tau: float
    mu: float = 0.0
    replications: int = 15000
    level: float = 0.95
    seed: int = 0
    index: int = 0
    priors: tuple[float, ...] = DEFAULT_PRIORS
    grid_size: int = SIM_GRID_SIZE

    def __post_init__(self):
        if self.n1 < 1 or self.n2 < 1:
            raise ValueError("study sizes must be positive")
        if not (math.isfinite(self.tau) and self.tau >= 0):
            raise ValueError(f"tau must be a nonnegative number, got {self.tau}")
        if self.replications < 1:
            raise ValueError("replications must be at least 1")
        if not 0 < self.level < 1:
            raise ValueError("level must lie in (0, 1)")
        if self.seed < 0 or self.index < 0:
            raise ValueError("seed and index must be unsigned")
        object.__setattr__(self, "priors", tuple(float(p) for p in self.priors))
        for scale in self.priors:
            HalfNormalPrior(scale)

    @property
    def s(self) -> np.ndarray:
        return 2.0 / np.sqrt(np.array([self.n1, self.n2], dtype=float))

    @property
    def bayes_methods(self) -> list[str]:
        return [HalfNormalPrior(p).label for p in self.priors]

    @property
    def methods(self) -> list[str]:
        return [*FREQUENTIST_METHODS, *self.bayes_methods]

    @property
    def estimators(self) -> list[str]:
        return [DL, *self.bayes_methods]

    @property
    def n_chunks(self) -> int:
        return -(-self.replications // CHUNK_SIZE)


@dataclass(frozen=True)
class Replicate:
    theta: np.ndarray
    y: np.ndarray


def scenario_rng(sc: Scenario, chunk: int = 0) -> np.random.Generator:
    seq = np.random.SeedSequence(sc.seed, spawn_key=(sc.index, chunk))
    return np.random.Generator(np.random.Philox(seq))


def _standard_normals(rng: np.random.Generator, shape) -> np.ndarray:
    u = rng.random(shape)
    u[u == 0.0] = 2.0**-54
    return normal_quantile(u)


def draw_replicates(sc: Scenario, rng: np.random.Generator, size: int) -> Replicate:
    """Draw ``size`` replicates: study effects first, then their estimates."""
    z = _standard_normals(rng, (size, 2, 2))
    theta = sc.mu + sc.tau * z[:, 0, :]
    y = theta + sc.s * z[:, 1, :]
    return Replicate(theta=theta, y=y)


def draw_replicate(sc: Scenario, rng: np.random.Generator) -> Replicate:
    rep = draw_replicates(sc, rng, 1)
    return Replicate(theta=rep.theta[0], y=rep.y[0])


def zero_fraction_analytic(sc: Scenario) -> float:
    """Probability that the two-study DL estimate is truncated to zero."""
    v = float(np.sum(sc.s**2))
    return float(2.0 * normal_cdf(math.sqrt(v / (v + 2.0 * sc.tau**2))) - 1.0)


def i_squared(sc: Scenario) -> float:
    """Heterogeneity share ``tau^2 / (tau^2 + typical within-study variance)``.

    The typical variance is the Higgins-Thompson value
    ``(k - 1) sum(w) / (sum(w)^2 - sum(w^2))`` with ``w = 1/s^2``.
    """
    w = 1.0 / sc.s**2
    typical = (w.size - 1) * w.sum() / (w.sum() ** 2 - np.sum(w**2))
    return float(sc.tau**2 / (sc.tau**2 + typical))


def simulate_chunk(sc: Scenario, chunk: int) -> dict[str, np.ndarray]:
    """Per-replicate outputs for one chunk of a scenario."""
    start = chunk * CHUNK_SIZE
    size = min(CHUNK_SIZE, sc.replications - start)
    if size <= 0:
        raise ValueError(f"chunk {chunk} is beyond {sc.replications} replications")
    rep = draw_replicates(sc, scenario_rng(sc, chunk), size)
    freq = batch_frequentist(rep.y, sc.s, sc.level)
    out = {
        DL: freq["tau_hat"],
        "sigma_hat": freq["sigma_hat"],
        "sigma_tilde": freq["sigma_tilde"],
    }
    for method in FREQUENTIST_METHODS:
        out[f"{method}_lower"] = freq[f"{method}_lower"]
        out[f"{method}_upper"] = freq[f"{method}_upper"]
    for scale in sc.priors:
        prior = HalfNormalPrior(scale)
        bayes = batch_bayes(rep.y, sc.s, prior, sc.level, grid_size=sc.grid_size, median=False)
        out[f"{prior.label}_lower"] = bayes["lower"]
        out[f"{prior.label}_upper"] = bayes["upper"]
        out[prior.label] = bayes["tau_median"]
    return out


def _chunk_task(args: tuple[Scenario, int]):
    sc, chunk = args
    try:
        return simulate_chunk(sc, chunk)
    except Exception as exc:  # reported per scenario by run_grid
        return f"chunk {chunk}: {type(exc).__name__}: {exc}"


def _proportion(flags: np.ndarray) -> tuple[float, float]:
    n = flags.size
    if n == 0:
        return math.nan, math.nan
    p = float(np.mean(flags))
    return p, math.sqrt(p * (1 - p) / n)


def _mean_se(x: np.ndarray) -> tuple[float, float]:
    if x.size == 0:
        return math.nan, math.nan
    se = float(np.std(x, ddof=1) / math.sqrt(x.size)) if x.size > 1 else math.nan
    return float(np.mean(x)), se


@dataclass
class ScenarioResult:
    """Aggregated metrics of one scenario; ``*_se`` are Monte Carlo standard errors."""

    scenario: Scenario
    coverage: dict[str, float] = field(default_factory=dict)
    coverage_se: dict[str, float] = field(default_factory=dict)
    mean_length: dict[str, float] = field(default_factory=dict)
    mean_length_se: dict[str, float] = field(default_factory=dict)
    tau_bias: dict[str, float] = field(default_factory=dict)
    tau_bias_se: dict[str, float] = field(default_factory=dict)
    failures: dict[str, int] = field(default_factory=dict)
    zero_fraction: float = math.nan
    zero_fraction_se: float = math.nan
    zero_fraction_analytic: float = math.nan
    i_squared: float = math.nan
    nesting_violations: int = 0
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None

    def records(self) -> list[dict]:
        """Long-format rows: scenario fields, then metric, method, value, mc_se."""
        sc = self.scenario
        base = {
            "n1": sc.n1,
            "n2": sc.n2,
            "tau": sc.tau,
            "mu": sc.mu,
            "replications": sc.replications,
            "level": sc.level,
            "seed": sc.seed,
        }
        rows = []

        def add(metric, method, value, se=math.nan):
            rows.append({**base, "metric": metric, "method": method, "value": value, "mc_se": se})

        for m in sc.methods:
            add("coverage", m, self.coverage.get(m, math.nan), self.coverage_se.get(m, math.nan))
        for m in sc.methods:
            add("mean_length", m, self.mean_length.get(m, math.nan), self.mean_length_se.get(m, math.nan))
        for e in sc.estimators:
            add("tau_bias", e, self.tau_bias.get(e, math.nan), self.tau_bias_se.get(e, math.nan))
        add("zero_fraction", DL, self.zero_fraction, self.zero_fraction_se)
        add("zero_fraction_analytic", DL, self.zero_fraction_analytic)
        add("i_squared", "", self.i_squared)
        for m in sc.methods:
            add("failures", m, self.failures.get(m, 0))
        add("nesting_violations", "mKH/HKSJ", self.nesting_violations)
        return rows


def aggregate(sc: Scenario, chunks: Sequence[dict[str, np.ndarray]]) -> ScenarioResult:
    data = {key: np.concatenate([c[key] for c in chunks]) for key in chunks[0]}
    res = ScenarioResult(
        scenario=sc,
        zero_fraction_analytic=zero_fraction_analytic(sc),
        i_squared=i_squared(sc),
    )
    for m in sc.methods:
        lower, upper = data[f"{m}_lower"], data[f"{m}_upper"]
        good = np.isfinite(lower) & np.isfinite(upper)
        res.failures[m] = int(np.count_nonzero(~good))
        lower, upper = lower[good], upper[good]
        res.coverage[m], res.coverage_se[m] = _proportion((lower <= sc.mu) & (sc.mu <= upper))
        res.mean_length[m], res.mean_length_se[m] = _mean_se(upper - lower)
    for e in sc.estimators:
        est = data[e]
        est = est[np.isfinite(est)]
        bias, res.tau_bias_se[e] = _mean_se(est)
        res.tau_bias[e] = bias - sc.tau
    res.zero_fraction, res.zero_fraction_se = _proportion(data[DL] == 0.0)

    # mKH must contain HKSJ and coincide with it exactly when sigma_tilde >= sigma_hat;
    # standard errors within rounding of each other may legitimately tie either way
    h_lo, h_hi = data["HKSJ_lower"], data["HKSJ_upper"]
    m_lo, m_hi = data["mKH_lower"], data["mKH_upper"]
    s_hat, s_tilde = data["sigma_hat"], data["sigma_tilde"]
    contains = (m_lo <= h_lo) & (h_hi <= m_hi)
    equal = (m_lo == h_lo) & (m_hi == h_hi)
    tie = np.abs(s_hat - s_tilde) <= 1e-12 * s_hat
    mismatch = (equal != (s_tilde >= s_hat)) & ~tie
    res.nesting_violations = int(np.count_nonzero(~contains | mismatch))
    return res


def run_grid(scenarios: Iterable[Scenario], workers: int = 1) -> list[ScenarioResult]:
    """Run every scenario; output does not depend on ``workers``."""
    scenarios = list(scenarios)
    if not scenarios:
        raise ValueError("no scenarios to run")
    if workers < 1:
        raise ValueError("workers must be at least 1")
    tasks = [(sc, c) for sc in scenarios for c in range(sc.n_chunks)]
    if workers == 1:
        outputs = [_chunk_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outputs = list(pool.map(_chunk_task, tasks))

    results, pos = [], 0
    for sc in scenarios:
        chunks = outputs[pos : pos + sc.n_chunks]
        pos += sc.n_chunks
        errors = [c for c in chunks if isinstance(c, str)]
        if errors:
            log.error("scenario %s failed: %s", sc, errors[0])
            results.append(ScenarioResult(scenario=sc, error="; ".join(errors)))
        else:
            results.append(aggregate(sc, chunks))
    return results


def run_scenario(sc: Scenario, workers: int = 1) -> ScenarioResult:
    return run_grid([sc], workers)[0]


def design_grid(
    replications: int = 15000,
    seed: int = 0,
    sizes: Sequence[Sequence[int]] = DESIGN_SIZES,
    taus: Sequence[float] = DESIGN_TAUS,
    **kwargs,
) -> list[Scenario]:
    """Size pairs crossed with tau values, indexed in row-major order."""
    if not sizes or not taus:
        raise ValueError("the grid needs at least one size pair and one tau value")
    return [
        Scenario(int(n1), int(n2), float(tau), replications=replications, seed=seed, index=i, **kwargs)
        for i, ((n1, n2), tau) in enumerate((sz, t) for sz in sizes for t in taus)
    ]
