"""Posteriors with a prescribed marginal plus conditional moment views.

The posterior keeps the prior's conditional structure f(y|x), replaces the
X-marginal by a prescribed density g(x), and tilts the conditional to meet
moment targets E[h_i(X, Y)] = c_i:

* relative-entropy objective: f(y|x) e^{sum lambda h(x,y)} / Z(x),
* polynomial objective of order beta + 1: the tilt base is
  1 + beta (f_X(x)/g(x))^beta sum lambda h(x,y).

Multipliers are global; the solver runs damped Newton over lambda with
nested quadrature (x-nodes drawn from g, per-x Gauss-Hermite or
transformed Gauss-Legendre nodes in y).  A change-of-variables wrapper
lifts views on linear functions of the underlying vector into this frame.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from scipy import stats

from .dist_core import Density, ExpectationEngine, SampleCloud, quadrature_cloud, _axis_nodes
from .errors import DivergentIntegral, Infeasible, InvalidInput, SingularJacobian
from .tilt_solvers import SolveReport, LAMBDA_CAP, MAX_ITER

__all__ = [
    "MarginalView",
    "ConditionalTilt",
    "ChangeOfVariables",
    "solve_marginal_i",
    "solve_marginal_poly",
    "lift_views",
]


@dataclass(frozen=True)
class MarginalView:
    """Prescribed X-marginal plus conditional moment targets.

    ``h`` entries are callables h(x, y) with scalar x and y of the prior's
    remaining dimensions; ``beta`` selects the polynomial objective.
    """

    g_marginal: Density
    h: Tuple[Callable, ...] = ()
    c: np.ndarray = ()
    beta: Optional[float] = None

    def __post_init__(self):
        if self.g_marginal.dim != 1:
            raise InvalidInput("the prescribed marginal must be one-dimensional")
        h = tuple(self.h)
        c = np.atleast_1d(np.asarray(self.c, dtype=float)) if len(h) else np.zeros(0)
        if len(h) != len(c):
            raise InvalidInput("h and c must have equal length")
        if self.beta is not None and self.beta <= 0:
            raise InvalidInput("beta must be positive when present")
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "c", c)

    @property
    def k(self) -> int:
        return len(self.h)


# ---------------------------------------------------------------------
# conditional structure of the prior


class _GaussianConditional:
    """Y | X = x blocks of a joint Gaussian, X being the first coordinate."""

    def __init__(self, prior: Density):
        mean = prior.params["mean"]
        cov = prior.params["cov"]
        self.mu_x = float(mean[0])
        self.mu_y = mean[1:]
        sxx = float(cov[0, 0])
        if sxx <= 0:
            raise InvalidInput("prior X-variance must be positive")
        self.sxx = sxx
        self.syx = cov[1:, 0]
        self.slope = self.syx / sxx
        self.cond_cov = cov[1:, 1:] - np.outer(self.syx, self.syx) / sxx
        # symmetrize against roundoff before factoring
        self.cond_cov = 0.5 * (self.cond_cov + self.cond_cov.T)
        self.dy = len(self.mu_y)
        eig, vec = np.linalg.eigh(self.cond_cov)
        eig = np.clip(eig, 0.0, None)
        self.sqrt_cov = vec @ np.diag(np.sqrt(eig))

    def x_marginal_pdf(self, x):
        return stats.norm.pdf(x, loc=self.mu_x, scale=math.sqrt(self.sxx))

    def nodes(self, x, order=None):
        """(y_nodes, normalized_weights) of f(y|x) at a single x."""
        if order is None:
            order = {1: 80, 2: 32}.get(self.dy, 12)
        z, wz = hermegauss(order)
        wz = wz / wz.sum()
        if self.dy == 1:
            y = self.cond_mean(x)[None, :] + z[:, None] * self.sqrt_cov[0, 0]
            return y, wz
        grids = np.meshgrid(*([z] * self.dy), indexing="ij")
        zz = np.stack([g.ravel() for g in grids], axis=-1)
        ww = wz
        for _ in range(self.dy - 1):
            ww = np.outer(ww, wz)
        y = self.cond_mean(x)[None, :] + zz @ self.sqrt_cov.T
        return y, ww.ravel()

    def cond_mean(self, x):
        return self.mu_y + self.slope * (x - self.mu_x)


class _NumericConditional:
    """Y | X = x of a generic 2-D density via a transformed node rule."""

    def __init__(self, prior: Density, order: int = 200):
        if prior.dim != 2:
            raise InvalidInput("generic conditionals support 2-D priors only")
        self.prior = prior
        self.y_nodes, self.y_jac = _axis_nodes(*prior.support[1], order)

    def x_marginal_pdf(self, x):
        pts = np.column_stack([np.full_like(self.y_nodes, x), self.y_nodes])
        dens = np.nan_to_num(np.asarray(self.prior.pdf(pts), dtype=float), nan=0.0)
        return float(np.sum(self.y_jac * dens))

    def nodes(self, x, order=None):
        pts = np.column_stack([np.full_like(self.y_nodes, x), self.y_nodes])
        dens = np.nan_to_num(np.asarray(self.prior.pdf(pts), dtype=float), nan=0.0)
        w = np.clip(self.y_jac * dens, 0.0, None)
        total = w.sum()
        if total <= 0:
            raise InvalidInput(f"prior conditional density vanishes at x = {x}")
        return self.y_nodes[:, None], w / total


def _conditional_of(prior: Density):
    if prior.kind == "gaussian_nd" and prior.dim >= 2:
        return _GaussianConditional(prior)
    return _NumericConditional(prior)


# ---------------------------------------------------------------------
# the solved object


@dataclass(frozen=True)
class ConditionalTilt:
    """Joint posterior: prescribed marginal times a tilted conditional."""

    prior: Density
    view: MarginalView
    lam: np.ndarray
    _cond: object = field(repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "lam", np.atleast_1d(np.asarray(self.lam, dtype=float)))

    def _tilt_weights(self, x: float):
        """(y_nodes, conditional posterior weights) at one x."""
        y, w = self._cond.nodes(x)
        if self.view.k == 0:
            return y, w
        H = _h_matrix(self.view.h, x, y)
        if self.view.beta is None:
            s = H @ self.lam
            e = w * np.exp(s - s.max())
        else:
            beta = self.view.beta
            r = self._marginal_ratio(x) ** beta
            b = np.clip(1.0 + beta * r * (H @ self.lam), 0.0, None)
            e = w * b ** (1.0 / beta)
        total = e.sum()
        if total <= 0:
            raise DivergentIntegral(f"tilted conditional mass vanished at x = {x}")
        return y, e / total

    def _marginal_ratio(self, x: float) -> float:
        gx = float(self.view.g_marginal.pdf(x))
        if gx <= 0:
            raise InvalidInput("prescribed marginal vanishes at a node used by the solver")
        return float(self._cond.x_marginal_pdf(x)) / gx

    def per_x_normalizer(self, x: float) -> float:
        y, w = self._cond.nodes(x)
        if self.view.k == 0:
            return 1.0
        H = _h_matrix(self.view.h, x, y)
        if self.view.beta is None:
            return float(w @ np.exp(H @ self.lam))
        beta = self.view.beta
        r = self._marginal_ratio(x) ** beta
        return float(w @ np.clip(1.0 + beta * r * (H @ self.lam), 0.0, None) ** (1.0 / beta))

    def conditional_mean(self, x: float) -> np.ndarray:
        y, w = self._tilt_weights(x)
        return w @ y

    def conditional_cov(self, x: float) -> np.ndarray:
        y, w = self._tilt_weights(x)
        m = w @ y
        d = y - m
        return (d.T * w) @ d

    def expect(self, phi: Callable, nx: int = 200) -> float:
        """Posterior expectation of phi(x, y)."""
        xs = quadrature_cloud(self.view.g_marginal, nx)
        total = 0.0
        for x, wx in zip(xs.points[:, 0], xs.weights):
            y, w = self._tilt_weights(float(x))
            total += wx * float(w @ np.asarray(phi(float(x), y), dtype=float))
        return total

    def joint_pdf(self, x: float, y) -> float:
        """Posterior density at (x, y); y has the prior's remaining dims."""
        y = np.atleast_1d(np.asarray(y, dtype=float))
        gx = float(self.view.g_marginal.pdf(x))
        fy_x = self._conditional_pdf(x, y)
        if self.view.k == 0:
            return gx * fy_x
        h = np.array([float(np.atleast_1d(hf(x, y[None, :]))[0]) for hf in self.view.h])
        if self.view.beta is None:
            w = math.exp(float(h @ self.lam))
        else:
            beta = self.view.beta
            r = self._marginal_ratio(x) ** beta
            w = max(1.0 + beta * r * float(h @ self.lam), 0.0) ** (1.0 / beta)
        return gx * fy_x * w / self.per_x_normalizer(x)

    def _conditional_pdf(self, x: float, y: np.ndarray) -> float:
        if isinstance(self._cond, _GaussianConditional):
            return float(stats.multivariate_normal.pdf(
                y, mean=self._cond.cond_mean(x), cov=self._cond.cond_cov,
                allow_singular=True))
        pt = np.concatenate([[x], y])[None, :]
        fx = self._cond.x_marginal_pdf(x)
        if fx <= 0:
            return 0.0
        return float(self.prior.pdf(pt)) / fx


def _h_matrix(hs, x, y) -> np.ndarray:
    """(ny, k) matrix of constraint values at one x over the y nodes."""
    ny = y.shape[0]
    H = np.empty((ny, len(hs)))
    for j, hf in enumerate(hs):
        H[:, j] = np.asarray(hf(x, y), dtype=float)
    return H


# ---------------------------------------------------------------------
# solvers


def _discretize(prior, view, nx):
    cond = _conditional_of(prior)
    xs = quadrature_cloud(view.g_marginal, nx)
    x_nodes = xs.points[:, 0]
    wg = xs.weights
    per_x = []
    for x in x_nodes:
        y, w = cond.nodes(float(x))
        H = _h_matrix(view.h, float(x), y)
        per_x.append((H, w))
    return cond, x_nodes, wg, per_x


def solve_marginal_i(prior: Density, view: MarginalView, eng: ExpectationEngine = None,
                     nx: int = 200, lam0=None):
    """Closest posterior in relative entropy with X-marginal fixed to g."""
    eng = eng or ExpectationEngine()
    cond = _conditional_of(prior)
    if view.k == 0:
        tilt = ConditionalTilt(prior, view, np.zeros(0), cond)
        return tilt, SolveReport(np.zeros(0), 0.0, 0, "Converged")
    cond, x_nodes, wg, per_x = _discretize(prior, view, nx)
    k = view.k
    lam = np.zeros(k) if lam0 is None else np.asarray(lam0, dtype=float).copy()

    def stats_at(lam):
        resid = -view.c.copy()
        J = np.zeros((k, k))
        dual = -float(lam @ view.c)
        for wx, (H, w) in zip(wg, per_x):
            s = H @ lam
            smax = s.max()
            e = w * np.exp(s - smax)
            Zx = e.sum()
            m = (H.T @ e) / Zx
            S = (H.T * e) @ H / Zx
            resid += wx * m
            J += wx * (S - np.outer(m, m))
            dual += wx * (math.log(Zx) + smax)
        return resid, J, dual

    resid, J, dual = stats_at(lam)
    it = 0
    for it in range(1, MAX_ITER + 1):
        if np.max(np.abs(resid)) <= 1e-10:
            break
        try:
            step = -np.linalg.solve(J + 1e-13 * np.eye(k), resid)
        except np.linalg.LinAlgError:
            step = -resid
        t = 1.0
        moved = False
        while t > 1e-14:
            lam_new = lam + t * step
            if np.linalg.norm(lam_new) > LAMBDA_CAP:
                t *= 0.5
                continue
            r2, J2, d2 = stats_at(lam_new)
            if math.isfinite(d2) and d2 <= dual + 1e-15 * max(1.0, abs(dual)):
                lam, resid, J, dual = lam_new, r2, J2, d2
                moved = True
                break
            t *= 0.5
        if not moved:
            break
    if np.max(np.abs(resid)) > 1e-8:
        if np.linalg.norm(lam) > 0.99 * LAMBDA_CAP:
            raise Infeasible("conditional-moment views unattainable (dual diverges)")
        status = "Infeasible"
    else:
        status = "Converged"
    tilt = ConditionalTilt(prior, view, lam, cond)
    return tilt, SolveReport(np.abs(resid), dual, it, status)


def solve_marginal_poly(prior: Density, view: MarginalView, eng: ExpectationEngine = None,
                        nx: int = 200):
    """Same views under the polynomial objective (view.beta must be set)."""
    if view.beta is None:
        raise InvalidInput("view.beta must be set for the polynomial objective")
    eng = eng or ExpectationEngine()
    beta = view.beta
    cond = _conditional_of(prior)
    if view.k == 0:
        tilt = ConditionalTilt(prior, view, np.zeros(0), cond)
        return tilt, SolveReport(np.zeros(0), 1.0, 0, "Converged")
    cond, x_nodes, wg, per_x = _discretize(prior, view, nx)
    k = view.k
    ratios = np.array([
        (cond.x_marginal_pdf(float(x)) / float(view.g_marginal.pdf(float(x)))) ** beta
        for x in x_nodes
    ])
    lam = np.zeros(k)

    def stats_at(lam):
        resid = -view.c.copy()
        J = np.zeros((k, k))
        min_base = np.inf
        for wx, r, (H, w) in zip(wg, ratios, per_x):
            base = 1.0 + beta * r * (H @ lam)
            min_base = min(min_base, float(base.min()))
            b = np.clip(base, 0.0, None)
            p = w * b ** (1.0 / beta)
            q = w * np.where(b > 0.0, b ** (1.0 / beta - 1.0), 0.0)
            Zx = p.sum()
            if Zx <= 0:
                return None, None, -np.inf
            m = (H.T @ p) / Zx
            uh = r * (H.T @ q)
            Jh = r * ((H.T * q) @ H)
            resid += wx * m
            J += wx * (Jh - np.outer(m, uh)) / Zx
            min_base = min_base
        return resid, J, min_base

    resid, J, min_base = stats_at(lam)
    it = 0
    for it in range(1, MAX_ITER + 1):
        if np.max(np.abs(resid)) <= 1e-10:
            break
        try:
            step = -np.linalg.solve(J + 1e-13 * np.eye(k), resid)
        except np.linalg.LinAlgError:
            step = -resid
        t = 1.0
        moved = False
        r0 = np.linalg.norm(resid)
        while t > 1e-14:
            lam_new = lam + t * step
            if np.linalg.norm(lam_new) > LAMBDA_CAP:
                t *= 0.5
                continue
            r2, J2, mb2 = stats_at(lam_new)
            if r2 is not None and (np.linalg.norm(r2) < r0 * (1 - 1e-12) or np.linalg.norm(r2) <= 1e-10):
                lam, resid, J, min_base = lam_new, r2, J2, mb2
                moved = True
                break
            t *= 0.5
        if not moved:
            break
    if np.max(np.abs(resid)) > 1e-8:
        raise Infeasible("conditional-moment views unattainable under the polynomial tilt")
    status = "Converged"
    if min_base < -1e-9:
        status = "NotStronglyFeasible" if min_base > -1e-6 else "Infeasible"
    # strong feasibility: 1 + beta r(x)^beta sum lambda c > 0 at the x-nodes
    if np.any(1.0 + beta * ratios * float(lam @ view.c) <= 0.0):
        status = "NotStronglyFeasible"
    tilt = ConditionalTilt(prior, view, lam, cond)
    return tilt, SolveReport(np.abs(resid), float(np.linalg.norm(resid)), it, status)


# ---------------------------------------------------------------------
# change of variables


@dataclass(frozen=True)
class ChangeOfVariables:
    """Forward map v, local inverse w and |det dv/dz| for lifting views."""

    v: Callable
    w: Callable
    jacobian: Callable
    matrix: Optional[np.ndarray] = None

    @classmethod
    def linear(cls, A) -> "ChangeOfVariables":
        A = np.asarray(A, dtype=float)
        det = np.linalg.det(A)
        if abs(det) < 1e-12:
            raise SingularJacobian("transformation matrix is singular")
        Ainv = np.linalg.inv(A)
        return cls(
            v=lambda z: np.asarray(z, dtype=float) @ A.T,
            w=lambda u: np.asarray(u, dtype=float) @ Ainv.T,
            jacobian=lambda z: abs(det) * np.ones(np.asarray(z).shape[:-1] or (1,)),
            matrix=A,
        )

    def check_inverse(self, pts) -> bool:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        back = self.w(self.v(pts))
        return bool(np.max(np.abs(back - pts)) < 1e-8)


def lift_views(cov: ChangeOfVariables, z_prior: Density, marginal_on: int,
               moments_on: Sequence[int], targets, g_marginal: Density,
               beta: Optional[float] = None):
    """Re-express views on components of v(Z) as a marginal-plus-moments view.

    ``marginal_on`` is the index of the transformed coordinate carrying the
    prescribed density; ``moments_on`` index the transformed coordinates
    with mean targets.  Returns the transformed prior over (X, Y), the
    view, and a pullback sending a posterior joint pdf back to z-space.
    """
    targets = np.atleast_1d(np.asarray(targets, dtype=float))
    moments_on = list(moments_on)
    if marginal_on in moments_on:
        raise InvalidInput("marginal and moment index sets must be disjoint")
    if len(moments_on) != len(targets):
        raise InvalidInput("targets must match moments_on in length")
    N = z_prior.dim
    # reorder coordinates so the marginal block comes first
    order = [marginal_on] + [i for i in range(N) if i != marginal_on]
    P = np.eye(N)[order]
    if cov.matrix is not None and z_prior.kind == "gaussian_nd":
        A = P @ cov.matrix
        mean = z_prior.params["mean"]
        covm = z_prior.params["cov"]
        xy_prior = Density.gaussian_nd(A @ mean, A @ covm @ A.T)
        Ainv = np.linalg.inv(A)

        def pullback(post_pdf):
            det = abs(np.linalg.det(A))

            def fz(z):
                u = np.atleast_1d(np.asarray(z, dtype=float)) @ A.T
                return post_pdf(float(u[0]), u[1:]) * det

            return fz
    elif cov.matrix is not None:
        A = P @ cov.matrix
        Ainv = np.linalg.inv(A)
        det = abs(np.linalg.det(A))

        def pdf(u):
            u = np.atleast_2d(np.asarray(u, dtype=float))
            z = u @ Ainv.T
            return np.asarray(z_prior.pdf(z), dtype=float) / det

        xy_prior = Density.custom(pdf, [(-math.inf, math.inf)] * N)

        def pullback(post_pdf):
            def fz(z):
                u = np.atleast_1d(np.asarray(z, dtype=float)) @ A.T
                return post_pdf(float(u[0]), u[1:]) * det

            return fz
    else:
        raise InvalidInput("nonlinear changes of variables need an explicit matrix-free "
                           "treatment; supply a linear map")
    # moment views become plain mean constraints on reordered coordinates
    pos = {orig: new for new, orig in enumerate(order)}
    hs = []
    for i in moments_on:
        j = pos[i] - 1  # position inside the y-block

        def h(x, y, j=j):
            return np.asarray(y, dtype=float)[:, j]

        hs.append(h)
    view = MarginalView(g_marginal, tuple(hs), targets, beta)
    return xy_prior, view, pullback
