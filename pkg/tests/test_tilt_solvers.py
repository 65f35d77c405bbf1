import math

import numpy as np
import pytest

from entilt import (
    ConstraintSet,
    Density,
    disjoint_set_update,
    feasibility_bound,
    interval_partition,
    sample,
    solve_i_divergence,
    solve_polynomial,
    solve_single_constraint_poly,
    suggest_beta,
    truncated_pareto_diagnostic,
)
from entilt.errors import Infeasible, InvalidInput
from entilt.payoffs import indicator, linear
from entilt.tilt_solvers import lambda_from_theta, theta_from_lambda


class TestExponentialTilt:
    def test_exponential_mean_raise_closed_form(self, eng):
        # raising the mean of Exp(alpha) to 1/gamma keeps the family:
        # the posterior is Exp(gamma) and the multiplier is alpha - gamma
        alpha, target_mean = 2.0, 0.8
        gamma = 1.0 / target_mean
        prior = Density.exponential(alpha)
        post, rep = solve_i_divergence(prior, ConstraintSet((linear(),), [target_mean]), eng)
        assert rep.status == "Converged"
        assert post.lam[0] == pytest.approx(alpha - gamma, abs=1e-9)
        assert np.max(np.abs(rep.residuals)) <= 1e-10

    def test_mgf_blowup_is_reported(self, eng):
        # Pareto priors admit no exponential tilt that raises the mean
        prior = Density.pareto(5.0)
        with pytest.raises(Infeasible):
            solve_i_divergence(prior, ConstraintSet((linear(),), [0.5]), eng)

    def test_inactive_geq_view_returns_prior(self, eng):
        prior = Density.exponential(1.0)
        cs = ConstraintSet((linear(),), [0.8], sense=("geq",))
        post, rep = solve_i_divergence(prior, cs, eng)
        assert np.allclose(post.lam, 0.0)
        xs = np.linspace(0.1, 5.0, 50)
        assert np.allclose(post.ratio(xs), 1.0)

    def test_binding_geq_view_matches_equality(self, eng):
        prior = Density.exponential(1.0)
        cs = ConstraintSet((linear(),), [1.3], sense=("geq",))
        post, rep = solve_i_divergence(prior, cs, eng)
        assert post.lam[0] == pytest.approx(1.0 - 1.0 / 1.3, abs=1e-9)

    def test_two_dim_gaussian_mean_shift(self, eng):
        # for a Gaussian prior with coordinate-mean targets the multiplier
        # is Sigma^{-1} (target - mu)
        mu = np.array([0.0, 0.0])
        cov = np.array([[1.0, 0.3], [0.3, 2.0]])
        prior = Density.gaussian_nd(mu, cov)
        target = np.array([0.4, -0.2])
        gs = (lambda x: np.asarray(x)[:, 0], lambda x: np.asarray(x)[:, 1])
        post, rep = solve_i_divergence(prior, ConstraintSet(gs, target), eng)
        assert rep.status == "Converged"
        np.testing.assert_allclose(post.lam, np.linalg.solve(cov, target - mu), atol=1e-7)

    def test_cloud_prior(self, eng):
        cloud = sample(Density.lognormal(0.0, 0.04), 40_000, seed=5)
        target = 1.05 * float(cloud.expect(linear()))
        post, rep = solve_i_divergence(cloud, ConstraintSet((linear(),), [target]), eng)
        assert rep.status == "Converged"
        assert abs(post.expect(linear(), eng) - target) <= 1e-4 * max(1.0, abs(target))


class TestPolynomialTilt:
    def test_single_constraint_closed_form(self, eng):
        # lognormal prior, n = 1: lambda = (a-1) / (E[X](e^{sigma2} - a))
        mu, s2 = 0.0, 0.04
        prior = Density.lognormal(mu, s2)
        for a in (1.01, 1.02, 1.03):
            post, rep = solve_single_constraint_poly(prior, linear(), a, 1, eng)
            want = (a - 1.0) / (math.exp(mu + s2 / 2.0) * (math.exp(s2) - a))
            assert post.lam[0] == pytest.approx(want, abs=1e-8)
            assert rep.status == "Converged"

    def test_target_at_prior_mean_is_identity(self, eng):
        prior = Density.lognormal(0.0, 0.04)
        post, rep = solve_single_constraint_poly(prior, linear(), 1.0, 2, eng)
        assert post.lam[0] == pytest.approx(0.0, abs=1e-12)

    def test_fast_path_agrees_with_general_solver(self, eng):
        prior = Density.lognormal(0.0, 0.04)
        a, n = 1.02, 2
        fast, _ = solve_single_constraint_poly(prior, linear(), a, n, eng)
        c = a * math.exp(0.02)
        gen, rep = solve_polynomial(prior, ConstraintSet((linear(),), [c]), 1.0 / n, eng)
        xs = np.linspace(0.2, 4.0, 60)
        np.testing.assert_allclose(fast.ratio(xs), gen.ratio(xs), atol=1e-6)

    def test_infeasible_target_detected(self, eng):
        prior = Density.lognormal(0.0, 0.04)
        with pytest.raises(Infeasible):
            solve_single_constraint_poly(prior, linear(), math.exp(0.04) * 1.05, 1, eng)

    def test_theta_lambda_bijection(self):
        lam = np.array([0.3, -0.1])
        c = np.array([1.2, 0.8])
        beta = 0.5
        theta = theta_from_lambda(lam, c, beta)
        np.testing.assert_allclose(lambda_from_theta(theta, c, beta), lam, atol=1e-12)
        with pytest.raises(InvalidInput):
            theta_from_lambda(np.array([-5.0, 0.0]), c, beta)

    def test_suggest_beta(self, eng):
        # Pareto(5) has E[X^k] < inf only for k < 4, so the largest usable
        # m is 2 (third moment finite, fourth not)
        assert suggest_beta(Density.pareto(5.0), (linear(),), eng) == pytest.approx(0.5)
        assert suggest_beta(Density.lognormal(0.0, 0.1), (linear(),), eng) == pytest.approx(1.0 / 8.0)


class TestFeasibilityBound:
    def test_closed_forms(self, eng):
        ln = Density.lognormal(0.0, 0.04)
        assert feasibility_bound(ln, linear(), 1, eng) == pytest.approx(math.exp(0.04), abs=1e-8)
        assert feasibility_bound(ln, linear(), 3, eng) == pytest.approx(math.exp(3 * 0.04), abs=1e-8)
        gm = Density.gamma(3.0, 2.0)
        assert feasibility_bound(gm, linear(), 2, eng) == pytest.approx(1.0 + 2.0 / 3.0, abs=1e-8)
        pa = Density.pareto(5.0)
        alpha, n = 5.0, 1
        want = (alpha - n - 1) * (alpha - 2) / ((alpha - n - 2) * (alpha - 1))
        assert feasibility_bound(pa, linear(1.0, 1.0), n, eng) == pytest.approx(want, abs=1e-8)


class TestDisjointSets:
    def test_uniform_two_blocks(self, eng):
        u = Density.custom(lambda x: np.ones(np.asarray(x, float).shape), (0.0, 1.0))
        part = interval_partition([0.5])
        post = disjoint_set_update(u, part, [0.3, 0.7], eng)
        # nu([0, 0.25]) = 0.25 * ratio on the first block
        assert 0.25 * post.ratio(np.array([0.1]))[0] == pytest.approx(0.15, abs=1e-12)

    def test_matching_masses_is_identity(self, eng):
        prior = Density.exponential(1.0)
        part = interval_partition([1.0])
        masses = [1.0 - math.exp(-1.0), math.exp(-1.0)]
        post = disjoint_set_update(prior, part, masses, eng)
        xs = np.linspace(0.1, 4.0, 40)
        np.testing.assert_allclose(post.ratio(xs), 1.0, atol=1e-12)

    def test_tail_event_probability(self, eng):
        # VaR-style view: force P(L >= x0) = 0.01
        prior = Density.exponential(1.0)
        x0 = 2.0
        part = interval_partition([x0])
        post = disjoint_set_update(prior, part, [0.99, 0.01], eng)
        got = post.expect(indicator(lo=x0), eng)
        assert got == pytest.approx(0.01, abs=1e-9)


class TestTruncatedDiagnostic:
    def test_near_zero_at_prior_mean(self):
        # at c equal to the untruncated mean, only the truncation-induced
        # mean deficit remains: lambda_M is tiny and vanishes with M
        out = truncated_pareto_diagnostic(4.0, 0.5, [1e2, 1e4])
        for _, lam, kl in out:
            assert 0.0 <= lam < 1e-2
            assert 0.0 <= kl < 1e-4
        assert out[1][1] < out[0][1]
        assert out[1][1] < 1e-5

    def test_monotone_decay(self):
        out = truncated_pareto_diagnostic(4.0, 1.0, [1e2, 1e3, 1e4])
        lams = [l for _, l, _ in out]
        kls = [k for _, _, k in out]
        assert lams[0] > lams[1] > lams[2] > 0.0
        assert kls[0] > kls[1] > kls[2] > 0.0
