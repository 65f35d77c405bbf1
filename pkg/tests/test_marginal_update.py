import math

import numpy as np
import pytest

from entilt import (
    ChangeOfVariables,
    Density,
    MarginalView,
    lift_views,
    solve_marginal_i,
    solve_marginal_poly,
)
from entilt.errors import InvalidInput


def _mean_y0(x, y):
    return np.asarray(y)[:, 0]


@pytest.fixture(scope="module")
def biv_prior():
    return Density.gaussian_nd([0.1, 0.2], [[1.0, 0.6], [0.6, 1.5]])


def test_prior_marginal_and_prior_mean_is_identity(biv_prior, eng):
    g_same = Density.gaussian_nd([0.1], [[1.0]])
    view = MarginalView(g_same, (_mean_y0,), [0.2])
    tilt, rep = solve_marginal_i(biv_prior, view, eng)
    assert rep.status == "Converged"
    assert np.max(np.abs(tilt.lam)) < 1e-8


def test_t_marginal_matches_gaussian_closed_form(biv_prior, eng):
    # scalar X and mean view on Y: the multiplier is the conditional-mean
    # shift over the conditional variance
    t3 = Density.student_t(3.0, loc=0.0, scale=1.0 / math.sqrt(3.0))
    view = MarginalView(t3, (_mean_y0,), [0.5])
    tilt, rep = solve_marginal_i(biv_prior, view, eng)
    assert rep.status == "Converged"
    cond_var = 1.5 - 0.6 ** 2
    lam_cf = (0.5 - 0.2 - 0.6 * (0.0 - 0.1)) / cond_var
    assert tilt.lam[0] == pytest.approx(lam_cf, abs=1e-6)
    assert tilt.conditional_cov(1.0)[0, 0] == pytest.approx(cond_var, abs=1e-6)
    want_mean = 0.2 + 0.6 * (1.0 - 0.1) + cond_var * lam_cf
    assert tilt.conditional_mean(1.0)[0] == pytest.approx(want_mean, abs=1e-6)
    # the moment view holds under the full posterior
    assert tilt.expect(_mean_y0) == pytest.approx(0.5, abs=1e-6)


def test_poly_small_beta_approaches_entropy_solution(biv_prior, eng):
    t3 = Density.student_t(3.0, loc=0.0, scale=1.0 / math.sqrt(3.0))
    tilt_i, _ = solve_marginal_i(biv_prior, MarginalView(t3, (_mean_y0,), [0.5]), eng)
    tilt_p, rep = solve_marginal_poly(
        biv_prior, MarginalView(t3, (_mean_y0,), [0.5], beta=1e-4), eng)
    assert rep.status == "Converged"
    assert tilt_p.lam[0] == pytest.approx(tilt_i.lam[0], abs=5e-3)


def test_pure_marginal_replacement(biv_prior, eng):
    t3 = Density.student_t(3.0, loc=0.0, scale=1.0 / math.sqrt(3.0))
    tilt, rep = solve_marginal_i(biv_prior, MarginalView(t3), eng)
    assert tilt.lam.size == 0
    # posterior X marginal is exactly g
    got = tilt.expect(lambda x, y: np.full(np.asarray(y).shape[0], x))
    assert got == pytest.approx(0.0, abs=1e-6)


def test_joint_pdf_normalizes(biv_prior, eng):
    t3 = Density.student_t(3.0, loc=0.0, scale=1.0 / math.sqrt(3.0))
    tilt, _ = solve_marginal_i(biv_prior, MarginalView(t3, (_mean_y0,), [0.5]), eng)
    # crude tensor check of the joint density mass
    xs = np.linspace(-12.0, 12.0, 401)
    ys = np.linspace(-8.0, 8.0, 401)
    vals = np.array([[tilt.joint_pdf(x, np.array([y])) for y in ys] for x in xs[::8]])
    mass_slices = np.trapezoid(vals, ys, axis=1)
    gx = np.array([float(t3.pdf(x)) for x in xs[::8]])
    # each x-slice integrates to the prescribed marginal density at x
    np.testing.assert_allclose(mass_slices, gx, atol=5e-4)


class TestChangeOfVariables:
    def test_linear_round_trip(self):
        A = np.array([[1.0, 1.0, 0.0], [0.0, 1.0, -1.0], [0.0, 0.0, 1.0]])
        cov = ChangeOfVariables.linear(A)
        pts = np.random.default_rng(0).standard_normal((20, 3))
        assert cov.check_inverse(pts)

    def test_lift_views_gaussian_fast_path(self):
        A = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, -1.0], [0.0, 0.0, 1.0]])
        z_prior = Density.gaussian_nd([0.1, 0.2, 0.3], np.diag([1.0, 2.0, 1.5]))
        g = Density.student_t(3.0, 0.0, 1.0)
        xy_prior, view, pullback = lift_views(
            ChangeOfVariables.linear(A), z_prior, marginal_on=1,
            moments_on=[0, 2], targets=[0.0, 0.0], g_marginal=g)
        # transformed prior mean: coordinate v1 = z1 - z2 leads
        want_mean = np.array([0.2 - 0.3, 0.1, 0.3])
        np.testing.assert_allclose(xy_prior.params["mean"], want_mean, atol=1e-12)
        assert view.g_marginal is g
        assert len(view.h) == 2

    def test_index_validation(self):
        A = np.eye(2)
        z_prior = Density.gaussian_nd([0.0, 0.0], np.eye(2))
        g = Density.student_t(3.0)
        with pytest.raises(InvalidInput):
            lift_views(ChangeOfVariables.linear(A), z_prior, 0, [0], [0.1], g)
