import math

import numpy as np
import pytest
from scipy import stats

from entilt import (
    Density,
    GaussianPrior,
    MarkowitzPosterior,
    markowitz_update,
    tail_ratio_diagnostic,
    var_estimate,
)
from entilt.errors import InvalidInput, SingularBlock


@pytest.fixture(scope="module")
def prior_2x1():
    # X scalar, Y two-dimensional
    mean = [0.1, 0.0, -0.1]
    cov = np.array([
        [1.00, 0.50, 0.25],
        [0.50, 2.00, 0.40],
        [0.25, 0.40, 1.50],
    ])
    return GaussianPrior.from_joint(mean, cov, n_x=1)


def test_partition_shapes(prior_2x1):
    assert prior_2x1.mu_x.shape == (1,)
    assert prior_2x1.mu_y.shape == (2,)
    assert prior_2x1.sigma_xy.shape == (1, 2)
    d = prior_2x1.to_density()
    assert d.dim == 3


def test_markowitz_closed_form(prior_2x1):
    g = Density.gaussian_nd([0.3], [[1.2]])
    a = np.array([0.2, 0.1])
    post = markowitz_update(prior_2x1, g, a)
    sxx = prior_2x1.sigma_xx
    slope = prior_2x1.sigma_yx @ np.linalg.inv(sxx)
    np.testing.assert_allclose(post.cond_mean_slope, slope, atol=1e-12)
    cond_cov = prior_2x1.sigma_yy - slope @ prior_2x1.sigma_xy
    np.testing.assert_allclose(post.cond_cov, cond_cov, atol=1e-12)
    # intercept makes E[Y] come out at the target under E_g[X] = 0.3
    np.testing.assert_allclose(
        post.cond_mean_intercept + post.cond_mean_slope @ np.array([0.3]), a, atol=1e-12)
    shift = a - prior_2x1.mu_y - slope @ (np.array([0.3]) - prior_2x1.mu_x)
    np.testing.assert_allclose(post.lam, np.linalg.solve(cond_cov, shift), atol=1e-12)


def test_sample_moments(prior_2x1):
    g = Density.gaussian_nd([0.3], [[1.2]])
    a = np.array([0.2, 0.1])
    post = markowitz_update(prior_2x1, g, a)
    draws = post.sample(200_000, seed=9)
    assert draws.shape == (200_000, 3)
    np.testing.assert_allclose(draws[:, 0].mean(), 0.3, atol=0.02)
    np.testing.assert_allclose(draws[:, 1:].mean(axis=0), a, atol=0.02)


def test_var_matches_analytic_normal():
    prior = GaussianPrior.from_joint([0.0, 0.0], [[1.0, 0.5], [0.5, 1.0]], 1)
    post = markowitz_update(prior, Density.gaussian_nd([0.0], [[1.0]]), [0.0])
    [(level, var99)] = var_estimate(post, [0.5, 0.5], 100.0, [0.99], 150_000, seed=7)
    sigma_p = math.sqrt(0.25 + 0.25 + 2 * 0.25 * 0.5)
    want = 100.0 * sigma_p * stats.norm.ppf(0.99)
    assert var99 == pytest.approx(want, rel=0.03)


def test_tail_ratio_approaches_power_of_slope():
    prior = GaussianPrior.from_joint([0.0, 0.0], [[1.0, 0.5], [0.5, 1.0]], 1)
    scale = 1.0 / math.sqrt(3.0)
    t3 = Density.student_t(3.0, 0.0, scale)
    post = markowitz_update(prior, t3, [0.5])
    [(_, r50)] = tail_ratio_diagnostic(post, t3, 4.0, 0, [50.0 * scale])
    [(_, r200)] = tail_ratio_diagnostic(post, t3, 4.0, 0, [200.0 * scale])
    limit = 0.5 ** 3
    assert abs(r200 - limit) < 0.10 * limit
    assert abs(r200 - limit) < abs(r50 - limit)


def test_validation_errors(prior_2x1):
    g = Density.gaussian_nd([0.0], [[1.0]])
    with pytest.raises(InvalidInput):
        markowitz_update(prior_2x1, g, [0.1])  # wrong Y dimension
    collinear = np.array([
        [1.0, 1.0, 0.2],
        [1.0, 1.0 + 1e-14, 0.2],
        [0.2, 0.2, 1.0],
    ])
    degenerate = GaussianPrior.from_joint([0.0, 0.0, 0.0], collinear, 2)
    g2 = Density.gaussian_nd([0.0, 0.0], np.eye(2))
    with pytest.raises(SingularBlock):
        markowitz_update(degenerate, g2, [0.1])
    post = markowitz_update(prior_2x1, g, [0.1, 0.2])
    with pytest.raises(InvalidInput):
        var_estimate(post, [1.0, 0.0, 0.0], 100.0, [1.5], 20_000, seed=0)
    with pytest.raises(InvalidInput):
        var_estimate(post, [1.0, 0.0, 0.0], 100.0, [0.99], 100, seed=0)
