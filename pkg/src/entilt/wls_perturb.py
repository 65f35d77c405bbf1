"""Penalized fallback for unattainable moment targets.

When no polynomial tilt reaches the targets c, minimize

    I_beta(lambda) + (1/t) * sum_j (E_lambda[g_j] - c_j)^2 / w_j

over feasible multipliers.  The deviations y_j = E_lambda[g_j] - c_j are
determined by lambda, so the joint problem over (lambda, y) reduces to
this single unconstrained objective; as t shrinks, c + y walks toward the
nearest attainable target.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import optimize

from .dist_core import ExpectationEngine, SampleCloud
from .errors import Infeasible, InvalidInput
from .tilt_solvers import (
    ConstraintSet,
    TiltedPosterior,
    _check_nonneg,
    _constraint_matrix,
    _prior_nodes,
    _quad_expect_any,
    solve_polynomial,
)

__all__ = ["PerturbedSolution", "solve_perturbed", "distance_curve"]


@dataclass(frozen=True)
class PerturbedSolution:
    lam: np.ndarray
    y: np.ndarray
    t: float
    achieved: np.ndarray
    distance: float
    posterior: TiltedPosterior
    objective: float

    def __post_init__(self):
        if self.t <= 0:
            raise InvalidInput("penalty scale t must be positive")
        if self.distance < 0:
            raise InvalidInput("distance is a sum of squares and cannot be negative")


def _objective_on_nodes(G, w, c, weights, beta, t):
    """Penalized objective and gradient on a fixed node cloud."""
    inv_b = 1.0 / beta

    def h(lam):
        base = 1.0 + beta * (G @ lam)
        b = np.clip(base, 0.0, None)
        p = b ** inv_b
        q = np.where(b > 0.0, b ** (inv_b - 1.0), 0.0)
        Z = w @ p
        if Z <= 0.0:
            return 1e12, np.zeros_like(lam)
        num = G.T @ (w * p)                  # d Z~ / d lam up to norming
        u = G.T @ (w * q)                    # d Z / d lam
        m = num / Z
        P = w @ (b * p)                      # int b^(1/beta + 1) dmu
        Pg = G.T @ (w * b * q)               # helper: int g b^(1/beta) dmu = num
        I = P / Z ** (beta + 1.0)
        dI = (1.0 + beta) * (num / Z ** (beta + 1.0) - P * u / Z ** (beta + 2.0))
        y = m - c
        val = I + (y * y / weights).sum() / t
        dm = (G.T * (w * q)) @ G / Z - np.outer(m, u) / Z
        grad = dI + (2.0 / t) * dm.T @ (y / weights)
        return val, grad

    return h


def solve_perturbed(prior, cs: ConstraintSet, beta: float, t: float,
                    eng: ExpectationEngine = None) -> PerturbedSolution:
    """Best-compromise posterior for the views in ``cs`` at penalty scale ``t``."""
    if beta <= 0:
        raise InvalidInput("beta must be positive")
    if t <= 0:
        raise InvalidInput("t must be positive")
    if cs.k == 0:
        raise InvalidInput("need at least one constraint")
    eng = eng or ExpectationEngine()
    cloud = _prior_nodes(prior, eng, 4000)
    G = _constraint_matrix(cloud, cs.g)
    w = cloud.weights
    h = _objective_on_nodes(G, w, cs.c, cs.weights, beta, t)

    starts = [np.zeros(cs.k)]
    try:
        exact, rep = solve_polynomial(prior, cs, beta, eng)
        if rep.status in ("Converged", "NotStronglyFeasible"):
            starts.append(exact.lam)
    except Infeasible:
        pass
    best = None
    for lam0 in starts:
        res = optimize.minimize(h, lam0, jac=True, method="L-BFGS-B",
                                options={"maxiter": 500, "ftol": 1e-15, "gtol": 1e-12})
        if best is None or res.fun < best.fun:
            best = res
    lam = best.x
    if not _check_nonneg(prior, cs.g, lam, beta):
        # Lambda itself must stay feasible; with the clipped objective the
        # minimizer can only leave the feasible set on a measure-zero fringe,
        # so treat a real violation as an empty feasible set
        raise Infeasible("no feasible multiplier for these views")
    # evaluate the solution with the full engine, not just the node grid
    kinks = cs.kinks()
    Z = _quad_expect_any(
        prior,
        lambda x: np.clip(1.0 + beta * _tilt_sum(cs.g, lam, x), 0.0, None) ** (1.0 / beta),
        eng,
        kinks,
    )
    post = TiltedPosterior(prior, cs.g, lam, beta, Z)
    achieved = np.array([post.expect(g, eng) for g in cs.g])
    y = achieved - cs.c
    distance = float((y * y / cs.weights).sum())
    return PerturbedSolution(lam, y, t, achieved, distance, post, float(best.fun))


def _tilt_sum(gs, lam, x):
    return sum(lj * np.asarray(gj(x), dtype=float) for lj, gj in zip(lam, gs))


def distance_curve(prior, cs: ConstraintSet, beta: float, t_grid: Sequence[float],
                   eng: ExpectationEngine = None):
    """(t, d(c, c + y_t)) along a decreasing penalty schedule.

    The last distance estimates d(c, c0), the gap to the attainable set.
    """
    t_grid = list(t_grid)
    if any(t <= 0 for t in t_grid):
        raise InvalidInput("t_grid must be positive")
    if any(b >= a for a, b in zip(t_grid, t_grid[1:])):
        raise InvalidInput("t_grid must be decreasing")
    eng = eng or ExpectationEngine()
    return [(t, solve_perturbed(prior, cs, beta, t, eng).distance) for t in t_grid]
