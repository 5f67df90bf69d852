import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from nnhm.bayesian import (
    HalfNormalPrior,
    MuPosterior,
    TauPosterior,
    batch_bayes,
    bayes_analysis,
    credible_interval,
    mixture_quantile,
    mu_posterior,
    prior_quantiles,
    tau_posterior,
    tau_posterior_median,
)
from nnhm.frequentist import Dataset, pooled_fit
from nnhm.numerics import NumericalError, integrate, normal_quantile, trapezoid_grid
from nnhm.report import load_example

from oracles import brute_force_interval

BUNDLED = ("romiplostim", "krystexxa")
HN05, HN10 = HalfNormalPrior(0.5), HalfNormalPrior(1.0)


def _integrate_density(tp):
    return float(np.dot(tp.grid.weights, tp.density))


class TestPrior:
    def test_table_one(self):
        med, lo, hi = prior_quantiles(HN05)
        assert (round(med, 3), round(lo, 3), round(hi, 2)) == (0.337, 0.016, 1.12)
        med, lo, hi = prior_quantiles(HN10)
        assert (round(med, 3), round(lo, 3), round(hi, 2)) == (0.674, 0.031, 2.24)

    @pytest.mark.parametrize("scale", [0.1, 0.5, 1.0, 3.7])
    def test_against_scipy_halfnorm(self, scale):
        expected = stats.halfnorm(scale=scale).ppf([0.5, 0.025, 0.975])
        assert prior_quantiles(HalfNormalPrior(scale)) == pytest.approx(tuple(expected), rel=1e-12)
        assert prior_quantiles(HalfNormalPrior(scale))[0] == pytest.approx(scale * 0.674490, abs=1e-6 * scale)

    @pytest.mark.parametrize("scale", [0.0, -1.0, float("nan"), float("inf")])
    def test_invalid_scale(self, scale):
        with pytest.raises(ValueError):
            HalfNormalPrior(scale)

    def test_labels(self):
        assert HN05.label == "Bayes-HN(0.5)"
        assert HN10.label == "Bayes-HN(1.0)"
        assert HalfNormalPrior(0.25).label == "Bayes-HN(0.25)"

    def test_tail_beyond_grid(self):
        # mass beyond five scales is what the default grid drops
        assert 2 * stats.norm.sf(5) < 6e-7


class TestTauPosterior:
    @pytest.mark.parametrize("name", BUNDLED)
    @pytest.mark.parametrize("prior", [HN05, HN10])
    def test_normalised(self, name, prior):
        tp = tau_posterior(load_example(name), prior)
        assert _integrate_density(tp) == pytest.approx(1.0, abs=1e-8)
        assert np.all(tp.density >= 0)
        assert tp.cdf()[-1] == pytest.approx(1.0, abs=1e-8)

    def test_mode_at_zero_for_identical_studies(self):
        tp = tau_posterior(Dataset.from_arrays([0.4, 0.4], [0.3, 0.3]), HN10)
        assert np.argmax(tp.density) == 0
        assert np.all(np.diff(tp.density) <= 0)

    def test_tiny_prior_concentrates_at_zero(self):
        tp = tau_posterior(Dataset.from_arrays([0.0, 3.0], [0.3, 0.3]), HalfNormalPrior(1e-4))
        assert tau_posterior_median(tp) < 1e-3

    @pytest.mark.parametrize("prior", [HN05, HN10])
    def test_romiplostim_median_below_prior_median(self, prior):
        tp = tau_posterior(load_example("romiplostim"), prior)
        assert tau_posterior_median(tp) < prior_quantiles(prior)[0]

    def test_flat_likelihood_returns_prior(self):
        y = np.array([0.3, -1.2])
        s = 1e3 * np.abs(y) + 1e3
        cell = 5 * 0.5 / 4000
        tp = tau_posterior(Dataset.from_arrays(y, s), HN05)
        assert abs(tau_posterior_median(tp) - prior_quantiles(HN05)[0]) <= cell
        assert tau_posterior_median(tp) == pytest.approx(0.337, abs=5e-4)

    def test_against_direct_likelihood(self):
        # marginal likelihood by numerical integration over mu, pointwise in tau
        data = load_example("krystexxa")
        tp = tau_posterior(data, HN10, grid_size=201)
        mu_grid = trapezoid_grid(-40, 40, 40001)
        direct = []
        for t in tp.grid.nodes:
            var = data.s**2 + t * t
            f = lambda m: np.prod(stats.norm.pdf(data.y[:, None], m[None, :], np.sqrt(var)[:, None]), axis=0)  # noqa: E731
            direct.append(integrate(f, mu_grid) * stats.norm.pdf(t, scale=1.0))
        direct = np.array(direct) / np.dot(tp.grid.weights, direct)
        assert np.max(np.abs(direct - tp.density)) < 1e-8

    def test_median_of_point_mass_near_zero(self):
        grid = trapezoid_grid(0, 1, 5)
        dens = np.array([8.0, 0.0, 0.0, 0.0, 0.0])
        tp = TauPosterior(grid, dens / np.dot(grid.weights, dens))
        assert tau_posterior_median(tp) < grid.nodes[1]

    def test_median_of_symmetric_density(self):
        grid = trapezoid_grid(0, 2, 201)
        dens = np.exp(-0.5 * ((grid.nodes - 1.0) / 0.2) ** 2)
        tp = TauPosterior(grid, dens / np.dot(grid.weights, dens))
        assert tau_posterior_median(tp) == pytest.approx(1.0, abs=1e-12)


class TestMuPosterior:
    def test_weights_sum_to_one(self):
        data = load_example("krystexxa")
        mp = mu_posterior(data, tau_posterior(data, HN05))
        assert mp.weights.sum() == pytest.approx(1.0, abs=1e-8)

    def test_symmetric_data(self):
        data = Dataset.from_arrays([-0.8, 0.8], [0.4, 0.4])
        mp = mu_posterior(data, tau_posterior(data, HN10))
        assert mp.mean == pytest.approx(0.0, abs=1e-14)

    def test_equal_weights_mean(self):
        data = Dataset.from_arrays([0.0, 1.0], [0.5, 0.5])
        mp = mu_posterior(data, tau_posterior(data, HN05))
        assert mp.mean == pytest.approx(0.5, abs=1e-14)
        assert np.allclose(mp.means, 0.5, atol=1e-15)

    def test_zero_prior_gives_fixed_effect_normal(self):
        data = Dataset.from_arrays([0.2, 1.1], [0.5, 0.7])
        mp = mu_posterior(data, tau_posterior(data, HalfNormalPrior(1e-9), grid_size=11))
        fit = pooled_fit(data, 0.0)
        assert np.allclose(mp.means, fit.mu_hat, atol=1e-12)
        assert np.allclose(mp.sds, fit.sigma_hat, atol=1e-12)


class TestCredibleInterval:
    def test_standard_normal(self):
        mp = MuPosterior(np.array([0.0]), np.array([1.0]), np.array([1.0]))
        ci = credible_interval(mp)
        assert (ci.lower, ci.estimate, ci.upper) == pytest.approx((-1.959963984540054, 0.0, 1.959963984540054), abs=1e-9)

    def test_two_point_mass(self):
        eps = 1e-6
        mp = MuPosterior(np.array([-1.0, 1.0]), np.array([eps, eps]), np.array([0.5, 0.5]))
        ci = credible_interval(mp)
        assert ci.lower == pytest.approx(-1, abs=1e-5)
        assert ci.upper == pytest.approx(1, abs=1e-5)

    def test_unbracketed_quantile_raises(self):
        mp = MuPosterior(np.array([0.0]), np.array([1.0]), np.array([1.0]))
        with pytest.raises(NumericalError):
            mixture_quantile(mp, 1e-120)

    def test_bad_level(self):
        mp = MuPosterior(np.array([0.0]), np.array([1.0]), np.array([1.0]))
        with pytest.raises(ValueError):
            credible_interval(mp, 1.0)

    def test_against_brute_force(self):
        lo, med, hi = brute_force_interval([0.0, 1.0], [0.5, 0.5], 0.5)
        ci = bayes_analysis(Dataset.from_arrays([0.0, 1.0], [0.5, 0.5]), HN05).interval
        assert (ci.lower, ci.estimate, ci.upper) == pytest.approx((lo, med, hi), abs=1e-3)

    @pytest.mark.parametrize("level", [0.5, 0.8, 0.95, 0.99])
    def test_mass_inside(self, level):
        data = load_example("krystexxa")
        mp = bayes_analysis(data, HN10).mu_post
        ci = credible_interval(mp, level)
        assert mp.cdf(ci.upper) - mp.cdf(ci.lower) == pytest.approx(level, abs=1e-9)


class TestProperties:
    @pytest.mark.parametrize("name", BUNDLED)
    def test_prior_limit_matches_fixed_effect(self, name):
        data = load_example(name)
        ci = bayes_analysis(data, HalfNormalPrior(1e-4)).interval
        fit = pooled_fit(data, 0.0)
        z = normal_quantile(0.975)
        assert ci.lower == pytest.approx(fit.mu_hat - z * fit.sigma_hat, abs=1e-3)
        assert ci.upper == pytest.approx(fit.mu_hat + z * fit.sigma_hat, abs=1e-3)

    @settings(max_examples=15, deadline=None)
    @given(st.floats(-20, 20))
    def test_location_equivariance(self, shift):
        data = load_example("krystexxa")
        moved = Dataset.from_arrays(data.y + shift, data.s)
        a, b = bayes_analysis(data, HN05, grid_size=801), bayes_analysis(moved, HN05, grid_size=801)
        assert np.max(np.abs(a.tau_post.density - b.tau_post.density)) < 1e-9
        assert b.interval.lower == pytest.approx(a.interval.lower + shift, abs=1e-8)
        assert b.interval.upper == pytest.approx(a.interval.upper + shift, abs=1e-8)

    @pytest.mark.parametrize("name", BUNDLED)
    @pytest.mark.parametrize("prior", [HN05, HN10])
    def test_grid_refinement(self, name, prior):
        data = load_example(name)
        a = bayes_analysis(data, prior, grid_size=4001).interval
        b = bayes_analysis(data, prior, grid_size=8001).interval
        assert abs(a.lower - b.lower) < 1e-4
        assert abs(a.upper - b.upper) < 1e-4

    @pytest.mark.parametrize("name", BUNDLED)
    def test_wider_prior_raises_tau_median(self, name):
        data = load_example(name)
        assert bayes_analysis(data, HN10).tau_median >= bayes_analysis(data, HN05).tau_median


class TestBatch:
    @settings(max_examples=10, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.sampled_from([HN05, HN10]))
    def test_matches_scalar(self, seed, prior):
        rng = np.random.default_rng(seed)
        s = rng.uniform(0.1, 0.4, size=2)
        y = rng.normal(scale=1.0, size=(8, 2))
        batch = batch_bayes(y, s, prior, grid_size=801)
        for i in range(8):
            res = bayes_analysis(Dataset.from_arrays(y[i], s), prior, grid_size=801)
            assert batch["lower"][i] == pytest.approx(res.interval.lower, abs=1e-9)
            assert batch["upper"][i] == pytest.approx(res.interval.upper, abs=1e-9)
            assert batch["median"][i] == pytest.approx(res.interval.estimate, abs=1e-9)
            assert batch["tau_median"][i] == pytest.approx(res.tau_median, abs=1e-12)

    def test_median_optional(self):
        out = batch_bayes(np.zeros((3, 2)), np.ones(2), HN05, grid_size=101, median=False)
        assert set(out) == {"lower", "upper", "tau_median"}
