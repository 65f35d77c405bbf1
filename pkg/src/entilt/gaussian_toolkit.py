"""Closed-form machinery for Gaussian priors with a marginal view.

When the prior is jointly Gaussian and the views are a prescribed density
g for the X-block plus a mean target a for the Y-block, the posterior is
available without iteration: X ~ g, and Y | X = x stays Gaussian with the
prior's conditional covariance and mean a + Sigma_yx Sigma_xx^{-1} (x - E_g[X]).

Also here: the tail-transfer diagnostic (for regularly varying g with
index alpha, the posterior density of a Y component inherits g's tail up
to the factor (sigma_xy / sigma_xx)^(alpha - 1)) and a sampling VaR
workflow over the updated model.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import integrate, stats

from .dist_core import Density, sample
from .errors import InvalidInput, SingularBlock

__all__ = [
    "GaussianPrior",
    "MarkowitzPosterior",
    "markowitz_update",
    "tail_ratio_diagnostic",
    "var_estimate",
]


@dataclass(frozen=True)
class GaussianPrior:
    """Partitioned Gaussian: X-block first, then Y-block."""

    mu_x: np.ndarray
    mu_y: np.ndarray
    sigma_xx: np.ndarray
    sigma_xy: np.ndarray
    sigma_yy: np.ndarray

    def __post_init__(self):
        mu_x = np.atleast_1d(np.asarray(self.mu_x, dtype=float))
        mu_y = np.atleast_1d(np.asarray(self.mu_y, dtype=float))
        sxx = np.atleast_2d(np.asarray(self.sigma_xx, dtype=float))
        sxy = np.atleast_2d(np.asarray(self.sigma_xy, dtype=float))
        syy = np.atleast_2d(np.asarray(self.sigma_yy, dtype=float))
        dx, dy = mu_x.size, mu_y.size
        if sxx.shape != (dx, dx) or syy.shape != (dy, dy) or sxy.shape != (dx, dy):
            raise InvalidInput("covariance block shapes disagree with the mean blocks")
        full = np.block([[sxx, sxy], [sxy.T, syy]])
        if not np.allclose(full, full.T, atol=1e-10):
            raise InvalidInput("joint covariance must be symmetric")
        eig = np.linalg.eigvalsh(full)
        if eig.min() < -1e-10 * max(1.0, abs(eig.max())):
            raise InvalidInput("joint covariance must be positive semidefinite")
        object.__setattr__(self, "mu_x", mu_x)
        object.__setattr__(self, "mu_y", mu_y)
        object.__setattr__(self, "sigma_xx", sxx)
        object.__setattr__(self, "sigma_xy", sxy)
        object.__setattr__(self, "sigma_yy", syy)

    @property
    def sigma_yx(self) -> np.ndarray:
        return self.sigma_xy.T

    @classmethod
    def from_joint(cls, mean, cov, n_x: int) -> "GaussianPrior":
        mean = np.atleast_1d(np.asarray(mean, dtype=float))
        cov = np.atleast_2d(np.asarray(cov, dtype=float))
        if not (1 <= n_x < mean.size):
            raise InvalidInput("n_x must split the vector into two nonempty blocks")
        return cls(mean[:n_x], mean[n_x:], cov[:n_x, :n_x], cov[:n_x, n_x:], cov[n_x:, n_x:])

    def to_density(self) -> Density:
        mean = np.concatenate([self.mu_x, self.mu_y])
        cov = np.block([[self.sigma_xx, self.sigma_xy], [self.sigma_yx, self.sigma_yy]])
        return Density.gaussian_nd(mean, cov)


@dataclass(frozen=True)
class MarkowitzPosterior:
    """X ~ g_marginal; Y | X = x ~ N(intercept + slope x, cond_cov)."""

    g_marginal: Density
    cond_mean_slope: np.ndarray
    cond_mean_intercept: np.ndarray
    cond_cov: np.ndarray
    lam: np.ndarray

    def __post_init__(self):
        cc = np.atleast_2d(np.asarray(self.cond_cov, dtype=float))
        eig = np.linalg.eigvalsh(0.5 * (cc + cc.T))
        if eig.min() < -1e-10 * max(1.0, abs(eig.max())):
            raise InvalidInput("conditional covariance must be positive semidefinite")
        object.__setattr__(self, "cond_cov", 0.5 * (cc + cc.T))
        object.__setattr__(self, "cond_mean_slope", np.atleast_2d(np.asarray(self.cond_mean_slope, dtype=float)))
        object.__setattr__(self, "cond_mean_intercept", np.atleast_1d(np.asarray(self.cond_mean_intercept, dtype=float)))
        object.__setattr__(self, "lam", np.atleast_1d(np.asarray(self.lam, dtype=float)))

    def conditional_mean(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return self.cond_mean_intercept + self.cond_mean_slope @ x

    def sample(self, n: int, seed: int) -> np.ndarray:
        """(n, dx + dy) posterior draws: X from g, then the conditional normal."""
        # separate child streams so the conditional noise is independent of
        # the X draws even though both derive from the one seed
        ss_x, ss_z = np.random.SeedSequence(seed).spawn(2)
        rng = np.random.default_rng(ss_z)
        xs = sample(self.g_marginal, n, np.random.default_rng(ss_x)).points
        means = xs @ self.cond_mean_slope.T + self.cond_mean_intercept
        eig, vec = np.linalg.eigh(self.cond_cov)
        L = vec @ np.diag(np.sqrt(np.clip(eig, 0.0, None)))
        z = rng.standard_normal((n, self.cond_cov.shape[0]))
        return np.hstack([xs, means + z @ L.T])


def markowitz_update(prior: GaussianPrior, g: Density, a) -> MarkowitzPosterior:
    """Exact posterior for the marginal view g on X plus mean target a for Y."""
    a = np.atleast_1d(np.asarray(a, dtype=float))
    if a.size != prior.mu_y.size:
        raise InvalidInput("target mean must match the Y-block dimension")
    if g.dim != prior.mu_x.size:
        raise InvalidInput("prescribed marginal must match the X-block dimension")
    try:
        slope = np.linalg.solve(prior.sigma_xx.T, prior.sigma_xy).T
    except np.linalg.LinAlgError:
        raise SingularBlock("sigma_xx must be invertible")
    if np.linalg.cond(prior.sigma_xx) > 1e12:
        raise SingularBlock("sigma_xx is numerically singular")
    eg = g.mean()
    if eg is None or not np.all(np.isfinite(eg)):
        raise InvalidInput("prescribed marginal needs finite first moments")
    cond_cov = prior.sigma_yy - slope @ prior.sigma_xy
    cond_cov = 0.5 * (cond_cov + cond_cov.T)
    intercept = a - slope @ eg
    shift = a - prior.mu_y - slope @ (eg - prior.mu_x)
    lam = np.linalg.lstsq(cond_cov, shift, rcond=None)[0]
    return MarkowitzPosterior(g, slope, intercept, cond_cov, lam)


def tail_ratio_diagnostic(post: MarkowitzPosterior, g: Density, alpha: float,
                          component: int, s_grid: Sequence[float]):
    """Posterior Y-component density over g(s) along s_grid.

    For g regularly varying with index alpha and scalar X, the ratio tends
    to (sigma_xy / sigma_xx)^(alpha - 1), i.e. slope^(alpha - 1).
    """
    if post.cond_mean_slope.shape[1] != 1:
        raise InvalidInput("tail diagnostic requires a one-dimensional X-block")
    slope = float(post.cond_mean_slope[component, 0])
    if slope == 0.0:
        raise InvalidInput("zero conditional slope: the tail-transfer limit is void")
    icpt = float(post.cond_mean_intercept[component])
    sd = math.sqrt(float(post.cond_cov[component, component]))
    if sd <= 0:
        raise InvalidInput("degenerate conditional variance for this component")
    out = []
    for s in s_grid:
        # f_Y(s) = int N(s; icpt + slope x, sd) g(x) dx; the mass sits near
        # the conditional peak x* = (s - icpt)/slope and near g's own bulk
        x_star = (s - icpt) / slope
        width = 6.0 * sd / abs(slope)
        pieces = sorted({-abs(x_star) - width, -width, 0.0, width,
                         x_star - width, x_star, x_star + width, abs(x_star) + width})

        def f(x):
            return stats.norm.pdf(s, loc=icpt + slope * x, scale=sd) * float(g.pdf(x))

        total = 0.0
        lo = -np.inf
        for p in pieces:
            v, _ = integrate.quad(f, lo, p, limit=200)
            total += v
            lo = p
        v, _ = integrate.quad(f, lo, np.inf, limit=200)
        total += v
        out.append((float(s), total / float(g.pdf(s))))
    return out


def var_estimate(post: MarkowitzPosterior, portfolio_weights, notional: float,
                 levels: Sequence[float], n: int, seed: int):
    """Empirical loss quantiles of -notional * w . (X, Y) under the posterior."""
    w = np.atleast_1d(np.asarray(portfolio_weights, dtype=float))
    if w.size == 0:
        raise InvalidInput("portfolio weights must be nonempty")
    levels = list(levels)
    if any(not (0.0 < l < 1.0) for l in levels):
        raise InvalidInput("confidence levels must lie in (0, 1)")
    if n < 10_000:
        raise InvalidInput("need at least 10000 samples for stable quantiles")
    draws = post.sample(n, seed)
    if w.size != draws.shape[1]:
        raise InvalidInput("portfolio weights must match the (X, Y) dimension")
    losses = -notional * (draws @ w)
    return [(float(l), float(np.quantile(losses, l))) for l in levels]
