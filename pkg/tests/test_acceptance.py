"""Acceptance criteria, each at its stated tolerance.

The full simulation grid runs once per session (a few minutes on one core).
A PASS/FAIL line per criterion is printed in the terminal summary.
"""

import math

import numpy as np
import pytest

from nnhm.bayesian import HalfNormalPrior, bayes_analysis, prior_quantiles
from nnhm.frequentist import DL_NORMAL, HKSJ, MKH, dl_tau, frequentist_intervals, pooled_fit
from nnhm.numerics import normal_quantile
from nnhm.report import SimulationConfig, load_example, design_grid_config, simulate_cmd
from nnhm.simulation import DESIGN_TAUS

from oracles import brute_force_interval

BUNDLED = ("romiplostim", "krystexxa")

PUBLISHED_ZERO_PERCENT = {
    (25, 25): (68, 67, 62, 47, 29),
    (100, 100): (68, 63, 52, 29, 15),
    (400, 400): (68, 53, 34, 16, 8),
    (25, 100): (68, 65, 60, 41, 23),
    (100, 400): (68, 61, 46, 24, 13),
    (25, 400): (68, 65, 59, 39, 22),
}


def criterion(number, title):
    return pytest.mark.criterion(number, title)


@pytest.fixture(scope="session")
def design_grid(tmp_path_factory):
    out = tmp_path_factory.mktemp("design-grid")
    results = simulate_cmd(design_grid_config(), out)
    assert all(r.ok for r in results), [r.error for r in results if not r.ok]
    return {(r.scenario.n1, r.scenario.n2, r.scenario.tau): r for r in results}


@criterion(1, "zero-estimate percentages within 1.5 pp of the published grid and 4 sigma of the closed form")
def test_zero_fraction_grid(design_grid):
    problems = []
    for (n1, n2), row in PUBLISHED_ZERO_PERCENT.items():
        for tau, printed in zip(DESIGN_TAUS, row):
            res = design_grid[(n1, n2, tau)]
            p, p0 = res.zero_fraction, res.zero_fraction_analytic
            band = 4 * math.sqrt(p0 * (1 - p0) / res.scenario.replications)
            if abs(100 * p - printed) > 1.5:
                problems.append(f"{n1}/{n2} tau={tau}: {100 * p:.2f}% vs printed {printed}%")
            if abs(p - p0) > band:
                problems.append(f"{n1}/{n2} tau={tau}: {p:.4f} vs closed form {p0:.4f} (band {band:.4f})")
    assert not problems, "\n".join(problems)


@criterion(2, "Krystexxa sigma pathology")
def test_krystexxa_sigma():
    data = load_example("krystexxa")
    fit, cis = frequentist_intervals(data)
    assert fit.sigma_tilde == pytest.approx(0.089, abs=0.01)
    assert fit.sigma_hat == pytest.approx(0.765, abs=0.01)
    assert cis[HKSJ].length < cis[DL_NORMAL].length
    assert cis[DL_NORMAL].lower < cis[HKSJ].lower and cis[HKSJ].upper < cis[DL_NORMAL].upper
    assert cis[MKH].lower < cis[DL_NORMAL].lower and cis[DL_NORMAL].upper < cis[MKH].upper


@criterion(3, "Romiplostim: zero DL estimate and an OR ratio of 2.12")
def test_romiplostim():
    data = load_example("romiplostim")
    assert dl_tau(data) == 0.0
    ratio = math.exp(data.y[0] - data.y[1])
    assert ratio == pytest.approx(2.12, abs=0.01)


@criterion(4, "half-normal prior medians and 95% intervals")
def test_prior_summaries():
    med, lo, hi = prior_quantiles(HalfNormalPrior(0.5))
    assert (f"{med:.3f}", f"{lo:.3f}", f"{hi:.2f}") == ("0.337", "0.016", "1.12")
    med, lo, hi = prior_quantiles(HalfNormalPrior(1.0))
    assert (f"{med:.3f}", f"{lo:.3f}", f"{hi:.2f}") == ("0.674", "0.031", "2.24")


@criterion(5, "HKSJ coverage within 0.95 +/- 0.007 for equal study sizes")
def test_hksj_calibration(design_grid):
    off = {
        key: res.coverage[HKSJ]
        for key, res in design_grid.items()
        if key[0] == key[1] and abs(res.coverage[HKSJ] - 0.95) > 0.007
    }
    assert not off, off


@criterion(6, "mKH contains HKSJ, equal exactly when sigma_tilde >= sigma_hat")
def test_nesting(design_grid):
    assert sum(res.nesting_violations for res in design_grid.values()) == 0
    for name in BUNDLED:
        data = load_example(name)
        fit, cis = frequentist_intervals(data)
        hk, mk = cis[HKSJ], cis[MKH]
        assert mk.lower <= hk.lower and hk.upper <= mk.upper
        assert ((mk.lower, mk.upper) == (hk.lower, hk.upper)) == (fit.sigma_tilde >= fit.sigma_hat)


@criterion(7, "DL-normal undercovers at 25/25, tau = 1")
def test_dl_undercoverage(design_grid):
    assert design_grid[(25, 25, 1.0)].coverage[DL_NORMAL] <= 0.92


@pytest.mark.parametrize("name", BUNDLED)
@pytest.mark.parametrize("scale", [0.5, 1.0])
@criterion(8, "Bayesian bounds match a brute-force oracle; zero-scale limit is the fixed-effect interval")
def test_bayes_oracle(name, scale):
    data = load_example(name)
    lo, _, hi = brute_force_interval(data.y, data.s, scale)
    ci = bayes_analysis(data, HalfNormalPrior(scale)).interval
    assert abs(ci.lower - lo) <= 1e-3
    assert abs(ci.upper - hi) <= 1e-3


@pytest.mark.parametrize("name", BUNDLED)
@criterion(8, "Bayesian bounds match a brute-force oracle; zero-scale limit is the fixed-effect interval")
def test_bayes_prior_limit(name):
    data = load_example(name)
    ci = bayes_analysis(data, HalfNormalPrior(1e-4)).interval
    fit = pooled_fit(data, 0.0)
    z = normal_quantile(0.975)
    assert abs(ci.lower - (fit.mu_hat - z * fit.sigma_hat)) <= 1e-3
    assert abs(ci.upper - (fit.mu_hat + z * fit.sigma_hat)) <= 1e-3


@criterion(9, "Mean lengths at 25/25, tau = 0.5: DL-normal < Bayes-HN(0.5) < mKH")
def test_length_ordering(design_grid):
    lengths = design_grid[(25, 25, 0.5)].mean_length
    assert lengths[DL_NORMAL] < lengths["Bayes-HN(0.5)"] < lengths[MKH]


@criterion(10, "Results CSV is bitwise identical at 1 and 8 workers")
def test_determinism(tmp_path):
    cfg = SimulationConfig.from_dict(
        {
            "sizes": [list(k) for k in PUBLISHED_ZERO_PERCENT],
            "taus": list(DESIGN_TAUS),
            "replications": 1000,
            "seed": 2024,
        }
    )
    simulate_cmd(cfg, tmp_path / "w1", workers=1)
    simulate_cmd(cfg, tmp_path / "w8", workers=8)
    for name in ("results", "zero_fractions", "bias", "coverage", "length"):
        assert (tmp_path / "w1" / f"{name}.csv").read_bytes() == (tmp_path / "w8" / f"{name}.csv").read_bytes()
