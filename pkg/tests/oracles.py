"""Brute-force reference computations used as independent oracles in tests.

Nothing here reuses the package's marginalisation: the joint posterior of
(mu, tau) is evaluated pointwise from the normal likelihood of every study,
summed over a tau grid, and the mu quantiles are read off a cumulative
trapezoid on a fine x grid.
"""

import math

import numpy as np

X_POINTS = 100_000
TAU_POINTS = 4001


def _log_normal_pdf(x, mean, var):
    return -0.5 * (math.log(2 * math.pi) + np.log(var) + (x - mean) ** 2 / var)


def brute_force_interval(y, s, prior_scale, level=0.95, x_points=X_POINTS, tau_points=TAU_POINTS, width=40.0):
    y, s = np.asarray(y, float), np.asarray(s, float)
    tau = np.linspace(0.0, 5 * prior_scale, tau_points)
    tau_w = np.full(tau_points, tau[1] - tau[0])
    tau_w[[0, -1]] *= 0.5
    centre = float(np.mean(y))
    half = width * float(max(np.max(s), np.ptp(y), 5 * prior_scale))
    x = np.linspace(centre - half, centre + half, x_points)

    # marginal density of mu: sum the joint over tau in blocks, rescaling a
    # running maximum so nothing overflows and memory stays bounded
    dens_x, shift = np.zeros(x_points), -np.inf
    for start in range(0, tau_points, 100):
        t = tau[start:start + 100, None]
        block = -0.5 * (t / prior_scale) ** 2
        for yj, sj in zip(y, s):
            block = block + _log_normal_pdf(yj, x[None, :], sj * sj + t * t)
        top = max(shift, float(block.max()))
        dens_x = dens_x * math.exp(shift - top) + tau_w[start:start + 100] @ np.exp(block - top)
        shift = top

    cdf = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(x) * (dens_x[1:] + dens_x[:-1]))])
    cdf /= cdf[-1]
    q = lambda p: float(np.interp(p, cdf, x))  # noqa: E731
    return q(0.5 * (1 - level)), q(0.5), q(0.5 * (1 + level))
