"""Moment-constrained projection solvers.

Given a prior and moment views E[g_i] = c_i (or >= c_i), find the closest
posterior under either objective:

* relative entropy, giving an exponential tilt e^{sum lambda_i g_i} / Z,
* the polynomial family int (dnu/dmu)^(beta+1) dmu, giving the tilt
  (1 + beta sum lambda_i g_i)^(1/beta) / Z.

Multipliers come from damped Newton iterations.  Sample-cloud priors run
entirely on the fused kernels in ``_kernels``; analytic priors are first
solved on a Gauss-Legendre node cloud and then polished against adaptive
quadrature so the reported residuals are grid-independent.  Fast paths:
the beta = 1 multiplier system is linear in the prior's first and second
moments, a single constraint with beta = 1/n reduces to one polynomial
root, and piecewise-constant views on a partition have a closed form.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate, optimize

from ._kernels import exp_tilt_stats, poly_tilt_stats
from .dist_core import (
    Density,
    ExpectationEngine,
    SampleCloud,
    expectation,
    quadrature_cloud,
    reweight,
    sample,
)
from .errors import (
    DivergentIntegral,
    Infeasible,
    InvalidInput,
    RootNotBracketed,
)

__all__ = [
    "ConstraintSet",
    "TiltedPosterior",
    "SolveReport",
    "solve_i_divergence",
    "solve_polynomial",
    "solve_single_constraint_poly",
    "feasibility_bound",
    "disjoint_set_update",
    "interval_partition",
    "truncated_pareto_diagnostic",
    "suggest_beta",
    "theta_from_lambda",
    "lambda_from_theta",
]

RESIDUAL_TOL_QUAD = 1e-10
RESIDUAL_TOL_MC = 1e-4
MAX_ITER = 200
LAMBDA_CAP = 1e6


@dataclass(frozen=True)
class ConstraintSet:
    """Moment views: functions ``g``, targets ``c``, senses, penalty weights.

    ``geq`` constraints must be listed first; ``weights`` are only used by
    the penalized fallback solver and default to uniform.
    """

    g: Tuple[Callable, ...]
    c: np.ndarray
    sense: Tuple[str, ...] = ()
    weights: Optional[np.ndarray] = None

    def __post_init__(self):
        g = tuple(self.g)
        c = np.atleast_1d(np.asarray(self.c, dtype=float))
        sense = tuple(self.sense) if self.sense else tuple("equality" for _ in g)
        if not (len(g) == len(c) == len(sense)):
            raise InvalidInput("g, c and sense must have equal length")
        if any(s not in ("equality", "geq") for s in sense):
            raise InvalidInput("sense entries must be 'equality' or 'geq'")
        k1 = sum(1 for s in sense if s == "geq")
        if any(s == "geq" for s in sense[k1:]):
            raise InvalidInput("geq constraints must be listed first")
        if self.weights is None:
            w = np.full(len(g), 1.0 / len(g)) if g else np.zeros(0)
        else:
            w = np.atleast_1d(np.asarray(self.weights, dtype=float))
            if w.shape != c.shape:
                raise InvalidInput("weights must match constraints in length")
            if np.any(w <= 0) or (len(w) and abs(w.sum() - 1.0) > 1e-9):
                raise InvalidInput("weights must be positive and sum to 1")
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "sense", sense)
        object.__setattr__(self, "weights", w)

    @property
    def k(self) -> int:
        return len(self.g)

    @property
    def k1(self) -> int:
        return sum(1 for s in self.sense if s == "geq")

    def kinks(self) -> Tuple[float, ...]:
        pts = []
        for fn in self.g:
            pts.extend(getattr(fn, "kinks", ()))
        return tuple(sorted(set(pts)))


@dataclass(frozen=True)
class TiltedPosterior:
    """Posterior as a tilt of its base prior.

    ``beta is None`` means the exponential form e^{sum lambda g} / Z;
    otherwise the ratio is (1 + beta sum lambda g)^{1/beta} / Z.
    """

    base: object
    g: Tuple[Callable, ...]
    lam: np.ndarray
    beta: Optional[float]
    normalizer: float

    def __post_init__(self):
        object.__setattr__(self, "g", tuple(self.g))
        object.__setattr__(self, "lam", np.atleast_1d(np.asarray(self.lam, dtype=float)))
        if self.normalizer <= 0 or not math.isfinite(self.normalizer):
            raise InvalidInput("normalizer must be finite and positive")
        if self.beta is not None and self.beta <= 0:
            raise InvalidInput("beta must be positive when present")

    @property
    def kinks(self) -> Tuple[float, ...]:
        pts = []
        for fn in self.g:
            pts.extend(getattr(fn, "kinks", ()))
        return tuple(sorted(set(pts)))

    def tilt_argument(self, x):
        if len(self.g) == 0:
            return np.zeros(np.shape(np.asarray(x, dtype=float))) * 0.0
        acc = None
        for lj, gj in zip(self.lam, self.g):
            term = lj * np.asarray(gj(x), dtype=float)
            acc = term if acc is None else acc + term
        return acc

    def ratio(self, x):
        """dnu/dmu evaluated pointwise."""
        s = self.tilt_argument(x)
        with np.errstate(over="ignore"):
            if self.beta is None:
                return np.exp(s) / self.normalizer
            base = np.clip(1.0 + self.beta * s, 0.0, None)
            return base ** (1.0 / self.beta) / self.normalizer

    def pdf(self, x):
        if not isinstance(self.base, Density):
            raise InvalidInput("pdf available only for analytic base priors")
        return self.base.pdf(x) * self.ratio(x)

    def expect(self, phi, eng: ExpectationEngine) -> float:
        """Posterior expectation of phi."""
        if isinstance(self.base, SampleCloud):
            return reweight(self.base, self.ratio).expect(phi)

        def f(x):
            return phi(x) * self.ratio(x)

        f.kinks = tuple(sorted(set(self.kinks) | set(getattr(phi, "kinks", ()))))
        return expectation(self.base, f, eng)

    def to_cloud(self, n: int, seed: int) -> SampleCloud:
        """Importance-reweighted sample from the base prior."""
        if isinstance(self.base, SampleCloud):
            return reweight(self.base, self.ratio)
        return reweight(sample(self.base, n, seed), self.ratio)


@dataclass(frozen=True)
class SolveReport:
    residuals: np.ndarray
    dual_value: float
    iterations: int
    status: str

    def __post_init__(self):
        object.__setattr__(self, "residuals", np.atleast_1d(np.asarray(self.residuals, dtype=float)))


# ---------------------------------------------------------------------
# shared plumbing


def _prior_nodes(prior, eng: ExpectationEngine, n: int = 2000) -> SampleCloud:
    if isinstance(prior, SampleCloud):
        return prior
    if prior.dim == 1:
        return quadrature_cloud(prior, n)
    if prior.dim == 2:
        return quadrature_cloud(prior, n)
    return sample(prior, eng.n_samples, eng.seed)


def _constraint_matrix(cloud: SampleCloud, gs) -> np.ndarray:
    n = cloud.points.shape[0]
    G = np.empty((n, len(gs)))
    x = cloud.points[:, 0] if cloud.dim == 1 else cloud.points
    for j, fn in enumerate(gs):
        G[:, j] = np.asarray(fn(x), dtype=float)
    return G


def _residual_tol(prior, eng) -> float:
    if isinstance(prior, SampleCloud):
        return RESIDUAL_TOL_MC
    return RESIDUAL_TOL_QUAD if prior.dim <= 2 else RESIDUAL_TOL_MC


def _quad_expect(prior: Density, fn, eng: ExpectationEngine, kinks=()):
    f = lambda x: fn(x)
    f.kinks = tuple(kinks)
    return expectation(prior, f, eng)


def _identity_posterior(prior) -> Tuple[TiltedPosterior, SolveReport]:
    post = TiltedPosterior(prior, (), np.zeros(0), None, 1.0)
    return post, SolveReport(np.zeros(0), 0.0, 0, "Converged")


# ---------------------------------------------------------------------
# exponential tilt (relative-entropy objective)


def _newton_exp_cloud(G, w, c, lam0, tol, maxit=MAX_ITER):
    lam = np.asarray(lam0, dtype=float).copy()
    Z, m, S = exp_tilt_stats(G, w, lam)
    F = math.log(Z) - lam @ c if Z > 0 else math.inf
    it = 0
    for it in range(1, maxit + 1):
        grad = m - c
        if np.max(np.abs(grad)) <= tol:
            return lam, it - 1, True, m, Z
        H = S - np.outer(m, m)
        try:
            step = -np.linalg.solve(H + 1e-13 * np.eye(len(c)), grad)
        except np.linalg.LinAlgError:
            step = -grad
        t = 1.0
        moved = False
        while t > 1e-14:
            lam_new = lam + t * step
            if np.linalg.norm(lam_new) > LAMBDA_CAP:
                t *= 0.5
                continue
            Z2, m2, S2 = exp_tilt_stats(G, w, lam_new)
            F2 = math.log(Z2) - lam_new @ c if Z2 > 0 else math.inf
            if math.isfinite(F2) and F2 <= F + 1e-15 * max(1.0, abs(F)):
                lam, Z, m, S, F = lam_new, Z2, m2, S2, F2
                moved = True
                break
            t *= 0.5
        if not moved:
            break
    return lam, it, bool(np.max(np.abs(m - c)) <= tol), m, Z


def _exp_quad_stats(prior: Density, gs, lam, eng, kinks):
    tilt = lambda x: np.exp(sum(lj * np.asarray(gj(x), dtype=float) for lj, gj in zip(lam, gs))) \
        if len(gs) else np.exp(np.zeros_like(np.asarray(x, dtype=float)))
    with np.errstate(over="ignore"):
        Z = _quad_expect(prior, tilt, eng, kinks)
        if not math.isfinite(Z) or Z <= 0:
            raise DivergentIntegral("normalizer is not finite")
        k = len(gs)
        m = np.empty(k)
        S = np.empty((k, k))
        for j in range(k):
            m[j] = _quad_expect(prior, lambda x, j=j: gs[j](x) * tilt(x), eng, kinks) / Z
        for j in range(k):
            for l in range(j, k):
                S[j, l] = S[l, j] = _quad_expect(
                    prior, lambda x, j=j, l=l: gs[j](x) * gs[l](x) * tilt(x), eng, kinks
                ) / Z
    return Z, m, S


def _solve_exp_core(prior, gs, c, eng):
    """Multipliers for equality constraints E_lam[g_j] = c_j; raises Infeasible."""
    if not gs:
        return np.zeros(0), 0, np.zeros(0), 1.0
    tol = _residual_tol(prior, eng)
    cloud = _prior_nodes(prior, eng)
    G = _constraint_matrix(cloud, gs)
    lam, iters, ok, m, Z = _newton_exp_cloud(G, cloud.weights, c, np.zeros(len(c)), max(tol, 1e-12))
    if not ok and np.linalg.norm(lam) > 0.99 * LAMBDA_CAP:
        raise Infeasible("dual minimization diverged (multiplier norm cap hit)")
    if isinstance(prior, SampleCloud):
        if not ok:
            raise Infeasible("constraints not attainable on the sample cloud")
        return lam, iters, m, Z
    # polish against adaptive quadrature so residuals are grid-independent
    kinks = tuple(sorted({p for fn in gs for p in getattr(fn, "kinks", ())}))
    try:
        for extra in range(30):
            Z, m, S = _exp_quad_stats(prior, gs, lam, eng, kinks)
            grad = m - c
            if np.max(np.abs(grad)) <= tol:
                return lam, iters + extra, m, Z
            H = S - np.outer(m, m)
            try:
                step = -np.linalg.solve(H + 1e-13 * np.eye(len(c)), grad)
            except np.linalg.LinAlgError:
                raise Infeasible("degenerate constraint covariance")
            if np.linalg.norm(lam + step) > LAMBDA_CAP:
                raise Infeasible("dual minimization diverged (multiplier norm cap hit)")
            lam = lam + step
        Z, m, _ = _exp_quad_stats(prior, gs, lam, eng, kinks)
        if np.max(np.abs(m - c)) <= 100 * tol:
            return lam, iters + 30, m, Z
        raise Infeasible("Newton polish failed to meet the residual tolerance")
    except DivergentIntegral as exc:
        raise Infeasible(f"tilted integrals diverge near the candidate multiplier: {exc}") from exc


def _with_active_set(prior, cs: ConstraintSet, eng, core):
    """KKT active-set loop shared by both objectives.

    ``core(gs, c)`` solves the equality subproblem and returns
    (lam_active, iterations, achieved_means, normalizer).
    """
    k = cs.k
    eq_idx = [i for i in range(k) if cs.sense[i] == "equality"]
    geq_idx = [i for i in range(k) if cs.sense[i] == "geq"]
    active = set(eq_idx)
    last = None
    for _ in range(2 * max(len(geq_idx), 1)):
        idx = sorted(active)
        gs = tuple(cs.g[i] for i in idx)
        c = cs.c[idx]
        lam_a, iters, m_a, Z = core(gs, c)
        lam = np.zeros(k)
        for pos, i in enumerate(idx):
            lam[i] = lam_a[pos]
        last = (lam, iters, Z, idx)
        # KKT checks: active geq multipliers nonnegative, inactive geq slack
        bad_active = [i for i in geq_idx if i in active and lam[i] < -1e-10]
        if bad_active:
            active.remove(max(bad_active, key=lambda i: -lam[i]))
            continue
        post = _posterior_from(prior, cs, lam, Z, core)
        slack = {}
        for i in geq_idx:
            if i not in active:
                slack[i] = post.expect(cs.g[i], eng) - cs.c[i]
        bad_inactive = [i for i, s in slack.items() if s < -1e-10]
        if bad_inactive:
            active.add(min(bad_inactive, key=lambda i: slack[i]))
            continue
        return lam, iters, Z, idx
    lam, iters, Z, idx = last
    return lam, iters, Z, idx


def _posterior_from(prior, cs, lam, Z, core):
    beta = getattr(core, "beta", None)
    return TiltedPosterior(prior, cs.g, lam, beta, Z)


def solve_i_divergence(prior, cs: ConstraintSet, eng: ExpectationEngine = None):
    """Closest posterior in relative entropy subject to the moment views."""
    eng = eng or ExpectationEngine()
    if cs.k == 0:
        return _identity_posterior(prior)
    core = lambda gs, c: _solve_exp_core(prior, gs, c, eng)
    lam, iters, Z, _ = _with_active_set(prior, cs, eng, core)
    post = TiltedPosterior(prior, cs.g, lam, None, Z)
    res = np.array([abs(post.expect(g, eng) - c) for g, c in zip(cs.g, cs.c)])
    dual = math.log(Z) - lam @ cs.c
    tol = _residual_tol(prior, eng)
    active_res = np.array([r for r, s, l in zip(res, cs.sense, lam)
                           if s == "equality" or abs(l) > 1e-12])
    status = "Converged" if (active_res.size == 0 or active_res.max() <= 100 * tol) else "Infeasible"
    return post, SolveReport(res, dual, iters, status)


# ---------------------------------------------------------------------
# polynomial tilt


def _check_nonneg(prior, gs, lam, beta) -> bool:
    """Verify 1 + beta sum lambda g >= 0 (a.e.); exact for piecewise-linear g."""
    if len(gs) == 0:
        return True
    piecewise = all(hasattr(fn, "pl_knots") for fn in gs)
    if isinstance(prior, SampleCloud):
        x = prior.points[:, 0] if prior.dim == 1 else prior.points
        base = 1.0 + beta * sum(l * np.asarray(fn(x), dtype=float) for l, fn in zip(lam, gs))
        return bool(base.min() >= -1e-12)
    lo, hi = prior.support[0] if prior.dim == 1 else (None, None)
    if piecewise and prior.dim == 1:
        knots = sorted({k for fn in gs for k in fn.pl_knots} | {v for v in (lo, hi) if math.isfinite(v)})
        pts = np.asarray(knots, dtype=float)
        if pts.size:
            base = 1.0 + beta * sum(l * np.asarray(fn(pts), dtype=float) for l, fn in zip(lam, gs))
            if base.min() < -1e-12:
                return False
        if not math.isfinite(hi):
            slope = sum(l * fn.pl_terminal_slopes[1] for l, fn in zip(lam, gs))
            if slope < -1e-15:
                return False
        if not math.isfinite(lo):
            slope = sum(l * fn.pl_terminal_slopes[0] for l, fn in zip(lam, gs))
            if slope > 1e-15:
                return False
        return True
    # generic: quantile grid over the bulk of the prior
    if prior.dim == 1:
        qs = np.linspace(1e-6, 1.0 - 1e-6, 100_000)
        try:
            x = np.array([prior.quantile(float(q)) for q in np.linspace(1e-6, 1 - 1e-6, 512)])
            x = np.interp(qs, np.linspace(1e-6, 1 - 1e-6, 512), x)
        except Exception:
            x = np.linspace(lo if math.isfinite(lo) else -1e4, hi if math.isfinite(hi) else 1e4, 100_000)
    else:
        x = sample(prior, 100_000, 0).points
    base = 1.0 + beta * sum(l * np.asarray(fn(x), dtype=float) for l, fn in zip(lam, gs))
    return bool(np.min(base) >= -1e-9)


def _poly_quad_stats(prior: Density, gs, lam, beta, eng, kinks):
    def base_fn(x):
        s = sum(lj * np.asarray(gj(x), dtype=float) for lj, gj in zip(lam, gs))
        return np.clip(1.0 + beta * s, 0.0, None)

    p = lambda x: base_fn(x) ** (1.0 / beta)
    q = lambda x: np.where(base_fn(x) > 0, base_fn(x) ** (1.0 / beta - 1.0), 0.0)
    Z = _quad_expect(prior, p, eng, kinks)
    if not math.isfinite(Z) or Z <= 0:
        raise DivergentIntegral("polynomial tilt normalizer is not finite")
    k = len(gs)
    num = np.empty(k)
    u = np.empty(k)
    J = np.empty((k, k))
    for j in range(k):
        num[j] = _quad_expect(prior, lambda x, j=j: gs[j](x) * p(x), eng, kinks)
        u[j] = _quad_expect(prior, lambda x, j=j: gs[j](x) * q(x), eng, kinks)
    for j in range(k):
        for l in range(j, k):
            J[j, l] = J[l, j] = _quad_expect(
                prior, lambda x, j=j, l=l: gs[j](x) * gs[l](x) * q(x), eng, kinks
            )
    return Z, num, u, J


def _poly_newton_step(Z, num, u, J, c):
    m = num / Z
    grad = m - c
    # d m_j / d lam_l = (J_jl - m_j u_l) / Z
    H = (J - np.outer(m, u)) / Z
    try:
        step = -np.linalg.solve(H + 1e-13 * np.eye(len(c)), grad)
    except np.linalg.LinAlgError:
        step = -grad
    return m, grad, step


def _solve_poly_linear_beta1(prior, gs, c, eng, kinks):
    """For beta = 1 the multiplier system is linear in the prior moments."""
    k = len(gs)
    m1 = np.empty(k)
    M2 = np.empty((k, k))
    for j in range(k):
        m1[j] = _quad_expect_any(prior, gs[j], eng, kinks)
    for j in range(k):
        for l in range(j, k):
            M2[j, l] = M2[l, j] = _quad_expect_any(
                prior, lambda x, j=j, l=l: np.asarray(gs[j](x), dtype=float) * np.asarray(gs[l](x), dtype=float),
                eng, kinks,
            )
    A = M2 - np.outer(c, m1)
    rhs = c - m1
    # lstsq picks the minimum-norm multiplier when constraints are redundant
    # (e.g. probabilities of a full partition, which sum to one)
    lam, _, rank, _ = np.linalg.lstsq(A, rhs, rcond=None)
    if not np.allclose(A @ lam, rhs, atol=1e-9 * max(1.0, float(np.abs(rhs).max()))):
        raise Infeasible("inconsistent linear multiplier system")
    Z = 1.0 + lam @ m1
    if Z <= 0:
        raise Infeasible("normalizer of the candidate tilt is nonpositive")
    return lam, Z


def _quad_expect_any(prior, fn, eng, kinks=()):
    if isinstance(prior, SampleCloud):
        return prior.expect(fn)
    return _quad_expect(prior, fn, eng, kinks)


def _solve_poly_core(prior, gs, c, beta, eng):
    if not gs:
        return np.zeros(0), 0, None, 1.0
    tol = _residual_tol(prior, eng)
    kinks = tuple(sorted({p for fn in gs for p in getattr(fn, "kinks", ())}))
    if abs(beta - 1.0) < 1e-14:
        lam, Z = _solve_poly_linear_beta1(prior, gs, c, eng, kinks)
        if not _check_nonneg(prior, gs, lam, beta):
            raise Infeasible("candidate multiplier leaves the feasible set "
                             "(1 + beta sum lambda g < 0 on a positive-measure set)")
        return lam, 1, None, Z
    cloud = _prior_nodes(prior, eng)
    G = _constraint_matrix(cloud, gs)
    w = cloud.weights
    lam = np.zeros(len(c))
    it = 0
    for it in range(1, MAX_ITER + 1):
        Z, num, u, J, min_base = poly_tilt_stats(G, w, lam, beta)
        if Z <= 0:
            raise Infeasible("tilt mass vanished during iteration")
        m, grad, step = _poly_newton_step(Z, num, u, J, c)
        if np.max(np.abs(grad)) <= max(tol, 1e-12):
            break
        t = 1.0
        moved = False
        r0 = np.linalg.norm(grad)
        while t > 1e-14:
            lam_new = lam + t * step
            if np.linalg.norm(lam_new) > LAMBDA_CAP:
                t *= 0.5
                continue
            Z2, num2, u2, J2, mb2 = poly_tilt_stats(G, w, lam_new, beta)
            if Z2 > 0:
                r1 = np.linalg.norm(num2 / Z2 - c)
                if r1 <= r0 * (1 - 1e-10) or r1 <= max(tol, 1e-12):
                    lam = lam_new
                    moved = True
                    break
            t *= 0.5
        if not moved:
            break
    Z, num, u, J, min_base = poly_tilt_stats(G, w, lam, beta)
    if np.max(np.abs(num / Z - c)) > 100 * max(tol, 1e-10) and isinstance(prior, SampleCloud):
        raise Infeasible("constraints not attainable on the sample cloud")
    if isinstance(prior, SampleCloud):
        if min_base < -1e-9:
            raise Infeasible("no feasible multiplier: tilt base negative on the cloud")
        return lam, it, None, Z
    # quadrature polish
    try:
        extra = 0
        for extra in range(30):
            Z, num, u, J = _poly_quad_stats(prior, gs, lam, beta, eng, kinks)
            m, grad, step = _poly_newton_step(Z, num, u, J, c)
            if np.max(np.abs(grad)) <= tol:
                break
            if np.linalg.norm(lam + step) > LAMBDA_CAP:
                raise Infeasible("multiplier norm cap hit")
            lam = lam + step
        else:
            Z, num, _, _ = _poly_quad_stats(prior, gs, lam, beta, eng, kinks)
            if np.max(np.abs(num / Z - c)) > 100 * tol:
                raise Infeasible("Newton polish failed to meet the residual tolerance")
    except DivergentIntegral as exc:
        raise Infeasible(f"tilted integrals diverge near the candidate multiplier: {exc}") from exc
    if not _check_nonneg(prior, gs, lam, beta):
        raise Infeasible("candidate multiplier leaves the feasible set")
    return lam, it + extra, None, Z


def solve_polynomial(prior, cs: ConstraintSet, beta: float, eng: ExpectationEngine = None):
    """Closest posterior under the polynomial objective of order beta + 1."""
    if beta <= 0:
        raise InvalidInput("beta must be positive")
    eng = eng or ExpectationEngine()
    if cs.k == 0:
        post = TiltedPosterior(prior, (), np.zeros(0), beta, 1.0)
        return post, SolveReport(np.zeros(0), 1.0, 0, "Converged")

    def core(gs, c):
        lam, iters, _, Z = _solve_poly_core(prior, gs, c, beta, eng)
        return lam, iters, None, Z

    core.beta = beta
    lam, iters, Z, _ = _with_active_set(prior, cs, eng, core)
    post = TiltedPosterior(prior, cs.g, lam, beta, Z)
    res = np.array([abs(post.expect(g, eng) - c) for g, c in zip(cs.g, cs.c)])
    tol = _residual_tol(prior, eng)
    strongly = 1.0 + beta * float(lam @ cs.c) > 0.0
    active_res = np.array([r for r, s, l in zip(res, cs.sense, lam)
                           if s == "equality" or abs(l) > 1e-12])
    if active_res.size and active_res.max() > 100 * tol:
        status = "Infeasible"
    elif not strongly:
        status = "NotStronglyFeasible"
    else:
        status = "Converged"
    dual = _theta_dual_value(prior, cs, lam, beta, eng)
    return post, SolveReport(res, dual, iters, status)


def _theta_dual_value(prior, cs, lam, beta, eng) -> float:
    """G(theta) = E[(1 + beta sum theta (g - c))^(1/beta + 1)] at theta = phi(lam)."""
    theta = theta_from_lambda(lam, cs.c, beta)

    def f(x):
        s = sum(tj * (np.asarray(gj(x), dtype=float) - cj)
                for tj, gj, cj in zip(theta, cs.g, cs.c))
        return np.clip(1.0 + beta * s, 0.0, None) ** (1.0 / beta + 1.0)

    f.kinks = cs.kinks()
    try:
        return _quad_expect_any(prior, f, eng)
    except DivergentIntegral:
        return math.inf


def theta_from_lambda(lam, c, beta):
    """phi: the reparameterization under which the polynomial dual is convex."""
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    denom = 1.0 + beta * float(lam @ np.atleast_1d(c))
    if denom <= 0:
        raise InvalidInput("map undefined: multiplier is not strongly feasible")
    return lam / denom


def lambda_from_theta(theta, c, beta):
    """psi, the inverse of :func:`theta_from_lambda`."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    denom = 1.0 - beta * float(theta @ np.atleast_1d(c))
    if denom <= 0:
        raise InvalidInput("map undefined at this theta")
    return theta / denom


# ---------------------------------------------------------------------
# single-constraint fast path, feasibility bound


def feasibility_bound(prior, g, n: int, eng: ExpectationEngine = None) -> float:
    """Upper limit of attainable mean-scaling ratios: E[g^{n+1}]/(E[g] E[g^n])."""
    if n < 1:
        raise InvalidInput("n must be a positive integer")
    eng = eng or ExpectationEngine()
    kinks = getattr(g, "kinks", ())
    m1 = _quad_expect_any(prior, lambda x: np.asarray(g(x), dtype=float), eng, kinks)
    mn = _quad_expect_any(prior, lambda x: np.asarray(g(x), dtype=float) ** n, eng, kinks)
    mn1 = _quad_expect_any(prior, lambda x: np.asarray(g(x), dtype=float) ** (n + 1), eng, kinks)
    if m1 <= 0 or mn <= 0:
        raise InvalidInput("g must have positive moments up to order n")
    return mn1 / (m1 * mn)


def solve_single_constraint_poly(prior, g, a: float, n: int, eng: ExpectationEngine = None):
    """Raise E[g] to a * E[g] with the order-(1/n) polynomial objective.

    The multiplier is a positive root of a degree-n polynomial in lambda
    whose coefficients are prior moments of g; no iteration needed.
    """
    if n < 1:
        raise InvalidInput("n must be a positive integer")
    eng = eng or ExpectationEngine()
    kinks = getattr(g, "kinks", ())
    moments = [1.0]
    for k in range(1, n + 2):
        moments.append(_quad_expect_any(prior, lambda x, k=k: np.asarray(g(x), dtype=float) ** k, eng, kinks))
    m1 = moments[1]
    bound = moments[n + 1] / (m1 * moments[n])
    if abs(a - 1.0) < 1e-14:
        post = TiltedPosterior(prior, (g,), np.zeros(1), 1.0 / n, 1.0)
        return post, SolveReport(np.zeros(1), 1.0, 0, "Converged")
    if not (1.0 < a < bound):
        raise Infeasible(f"target ratio {a} outside the attainable interval (1, {bound:.6g})")
    # coefficient of lambda^k: n^-k C(n,k) (E[g^{k+1}] - a E[g] E[g^k])
    coefs = np.array([
        (n ** -k) * math.comb(n, k) * (moments[k + 1] - a * m1 * moments[k])
        for k in range(n, -1, -1)
    ])
    roots = np.roots(coefs)
    real = [r.real for r in roots if abs(r.imag) < 1e-10 * max(1.0, abs(r)) and r.real > 0]
    if not real:
        raise Infeasible("no positive root of the multiplier polynomial")
    lam = min(real)
    beta = 1.0 / n
    # posterior ratio (1 + (lam/n) g)^n / Z; store in the standard form
    post_lam = np.array([lam])
    Z = _quad_expect_any(
        prior, lambda x: (1.0 + (lam / n) * np.asarray(g(x), dtype=float)) ** n, eng, kinks
    )
    post = TiltedPosterior(prior, (g,), post_lam, beta, Z)
    achieved = post.expect(g, eng)
    res = np.array([abs(achieved - a * m1)])
    status = "Converged" if res[0] <= 1e-8 * max(1.0, abs(a * m1)) else "Infeasible"
    return post, SolveReport(res, float(Z), 0, status)


# ---------------------------------------------------------------------
# disjoint-set views


def interval_partition(edges: Sequence[float]):
    """Membership function for the partition cut at ``edges`` (1-D).

    Blocks are (-inf, e0), [e0, e1), ..., [e_last, inf) intersected with
    the prior support; the callable returns the block index of each point.
    """
    edges = np.asarray(sorted(edges), dtype=float)
    if edges.size == 0:
        raise InvalidInput("need at least one edge")

    def member(x):
        return np.searchsorted(edges, np.asarray(x, dtype=float), side="right")

    member.edges = tuple(edges)
    member.n_blocks = edges.size + 1
    return member


def disjoint_set_update(prior, sets, alphas, eng: ExpectationEngine = None) -> TiltedPosterior:
    """Prescribe probabilities of the blocks of a partition.

    All three objectives (relative entropy, polynomial, total variation)
    share this optimum: scale the prior within each block.
    """
    eng = eng or ExpectationEngine()
    alphas = np.atleast_1d(np.asarray(alphas, dtype=float))
    if np.any(alphas < 0) or abs(alphas.sum() - 1.0) > 1e-9:
        raise InvalidInput("alphas must be a probability vector")
    nb = getattr(sets, "n_blocks", alphas.size)
    if nb != alphas.size:
        raise InvalidInput("alphas length must match the number of blocks")
    masses = _block_masses(prior, sets, nb, eng)
    if np.any((masses <= 0) & (alphas > 0)):
        raise InvalidInput("a block with positive target probability has zero prior mass")
    indicators = []
    for i in range(nb):
        def ind(x, i=i):
            return (np.asarray(sets(x)) == i).astype(float)

        ind.kinks = tuple(getattr(sets, "edges", ()))
        indicators.append(ind)
    # log(alpha_i / mass_i) per block; alpha = 0 maps to a tilt of about
    # -690, i.e. a ratio that underflows to zero instead of a nan-producing
    # -inf * 0 in the tilt sum
    safe_mass = np.where(masses > 0, masses, 1.0)
    safe_alpha = np.maximum(alphas, 1e-300)
    lam = np.where(masses > 0, np.log(safe_alpha / safe_mass), 0.0)
    # normalizer is sum alpha_i = 1 by construction
    return TiltedPosterior(prior, tuple(indicators), lam, None, 1.0)


def _block_masses(prior, sets, nb, eng) -> np.ndarray:
    if isinstance(prior, SampleCloud):
        idx = np.asarray(sets(prior.points[:, 0] if prior.dim == 1 else prior.points))
        return np.array([prior.weights[idx == i].sum() for i in range(nb)])
    edges = getattr(sets, "edges", None)
    if edges is not None and prior.dim == 1 and prior._frozen is not None and hasattr(prior._frozen, "cdf"):
        cdf = prior._frozen.cdf
        cuts = [prior.support[0][0]] + list(edges) + [prior.support[0][1]]
        vals = [0.0 if not math.isfinite(c) and c < 0 else (1.0 if not math.isfinite(c) else float(cdf(c))) for c in cuts]
        return np.diff(np.asarray(vals))
    masses = np.empty(nb)
    for i in range(nb):
        f = lambda x, i=i: (np.asarray(sets(x)) == i).astype(float)
        f.kinks = tuple(getattr(sets, "edges", ()))
        masses[i] = expectation(prior, f, eng)
    return masses


# ---------------------------------------------------------------------
# diagnostics and helpers


def truncated_pareto_diagnostic(alpha: float, c: float, M_grid: Sequence[float], eng: ExpectationEngine = None):
    """Tilt a truncated heavy-tail prior toward an unattainable mean.

    The prior is (alpha-1)/(1+x)^alpha restricted to [0, M] and
    renormalized.  For c above the untruncated attainable mean the
    exponential tilt exists for every finite M, but the multiplier and
    the divergence from the truncated prior both decay to zero as M
    grows: the view is absorbed by an ever-thinner far tail.
    """
    if alpha <= 2:
        raise InvalidInput("alpha must exceed 2 so the prior mean is finite")
    if c < 1.0 / (alpha - 2.0):
        raise InvalidInput("c must not fall below the untruncated prior mean 1/(alpha-2)")
    M_grid = list(M_grid)
    if any(b <= a for a, b in zip(M_grid, M_grid[1:])):
        raise InvalidInput("M_grid must be increasing")
    out = []
    for M in M_grid:
        lam_M, kl_M = _truncated_tilt(alpha, c, M)
        out.append((M, lam_M, kl_M))
    return out


def _trunc_moments(alpha, lam, M):
    """(Z, mean) of e^{lam x} against the truncated, renormalized prior."""
    pdf = lambda x: (alpha - 1.0) * (1.0 + x) ** (-alpha)
    mass = 1.0 - (1.0 + M) ** (1.0 - alpha)
    shift = lam * M if lam > 0 else 0.0

    def zf(x):
        return math.exp(lam * x - shift) * pdf(x) / mass

    def mf(x):
        return x * math.exp(lam * x - shift) * pdf(x) / mass

    # split points dense both near 0 (bulk of the prior) and near M (where
    # the tilted mass concentrates once lam M is large)
    pieces = set(np.geomspace(1.0, max(M, 2.0), 12))
    pieces |= {M - (M / 2.0) * 2.0 ** (-j) for j in range(1, 12)}
    edges = [0.0] + sorted(p for p in pieces if 0.0 < p < M) + [M]
    # epsabs = 0: after the shift the integrand can be uniformly tiny, and
    # any absolute floor would swamp it with quadrature noise
    Z = sum(integrate.quad(zf, a, b, limit=200, epsabs=0.0, epsrel=1e-11)[0]
            for a, b in zip(edges[:-1], edges[1:]))
    mean = sum(integrate.quad(mf, a, b, limit=200, epsabs=0.0, epsrel=1e-11)[0]
               for a, b in zip(edges[:-1], edges[1:]))
    return Z, mean / Z, shift


def _truncated_tilt(alpha, c, M):
    def h(lam):
        _, mean, _ = _trunc_moments(alpha, lam, M)
        return mean - c

    lo, hi = 0.0, 1e-8
    if h(lo) > 0:
        return 0.0, 0.0
    # the crossing shrinks as M grows, so start tiny and double; stop once
    # the tilt exponent lam*M is far past anything numerically sensible
    for _ in range(80):
        if h(hi) > 0:
            break
        if hi * M > 1e4:
            raise RootNotBracketed(f"target mean {c} unattainable on [0, {M}]")
        hi *= 2.0
    else:
        raise RootNotBracketed(f"target mean {c} unattainable on [0, {M}]")
    lam = optimize.brentq(h, lo, hi, xtol=1e-14, rtol=1e-13)
    Z, _, shift = _trunc_moments(alpha, lam, M)
    kl = lam * c - (math.log(Z) + shift)
    return lam, max(kl, 0.0)


def suggest_beta(prior, gs, eng: ExpectationEngine = None, m_max: int = 8) -> float:
    """1/m for the largest m such that every g has a finite (m+1)-th moment."""
    eng = eng or ExpectationEngine()
    best = 0
    for m in range(1, m_max + 1):
        try:
            for g in gs:
                v = _quad_expect_any(
                    prior,
                    lambda x, g=g, m=m: np.abs(np.asarray(g(x), dtype=float)) ** (m + 1),
                    eng,
                    getattr(g, "kinks", ()),
                )
                if not math.isfinite(v):
                    raise DivergentIntegral("moment not finite")
        except DivergentIntegral:
            break
        best = m
    if best == 0:
        raise Infeasible("no finite second moment; no valid beta of the form 1/m")
    return 1.0 / best
