"""Divergence functionals between a posterior and its base prior.

The posterior enters as a density ratio dnu/dmu.  Alongside the two
objectives actually minimized elsewhere (relative entropy and the
polynomial family int ratio^(beta+1) dmu) this module exposes the
relative Tsallis and Renyi entropies through their algebraic links

    I_beta = 1 + beta * S_beta = exp(beta * H_{beta+1})

and total variation.  Divergent integrals come back as +inf values, not
exceptions: absolute-continuity failure is a legitimate answer here.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dist_core import Density, ExpectationEngine, SampleCloud, expectation
from .errors import DivergentIntegral, InvalidInput, NotAbsolutelyContinuous, SupportMismatch

__all__ = [
    "DivergenceValue",
    "i_divergence",
    "polynomial_divergence",
    "tsallis_from_polynomial",
    "renyi_from_polynomial",
    "total_variation",
]


@dataclass(frozen=True)
class DivergenceValue:
    kind: str
    value: float

    def __post_init__(self):
        if self.kind == "i_divergence" and self.value < -1e-9:
            raise InvalidInput("relative entropy cannot be negative")
        if self.kind.startswith("polynomial") and self.value < 1.0 - 1e-9:
            raise InvalidInput("polynomial divergence is at least 1")
        if self.kind == "total_variation" and not (-1e-12 <= self.value <= 1.0 + 1e-12):
            raise InvalidInput("total variation lies in [0, 1]")

    def __float__(self):
        return float(self.value)


def _ratio_integrand(ratio, transform):
    def f(x):
        r = np.asarray(ratio(x), dtype=float)
        if np.any(np.isnan(r)):
            raise NotAbsolutelyContinuous("ratio undefined inside the base support")
        return transform(np.clip(r, 0.0, None))

    return f


def i_divergence(ratio, base, eng: ExpectationEngine) -> DivergenceValue:
    """int ratio * log(ratio) d(base), with 0 log 0 = 0."""

    def xlogx(r):
        out = np.zeros_like(r)
        pos = r > 0
        out[pos] = r[pos] * np.log(r[pos])
        return out

    f = _ratio_integrand(ratio, xlogx)
    if isinstance(base, SampleCloud):
        vals = xlogx(np.clip(np.asarray([float(np.atleast_1d(ratio(p[0] if base.dim == 1 else p))[0])
                                         for p in base.points]), 0.0, None))
        return DivergenceValue("i_divergence", float(base.weights @ vals))
    try:
        v = expectation(base, f, eng)
    except DivergentIntegral:
        return DivergenceValue("i_divergence", math.inf)
    return DivergenceValue("i_divergence", max(v, 0.0))


def polynomial_divergence(ratio, base, beta: float, eng: ExpectationEngine) -> DivergenceValue:
    """int ratio^(beta+1) d(base)."""
    if beta <= 0:
        raise InvalidInput("beta must be positive")
    f = _ratio_integrand(ratio, lambda r: r ** (beta + 1.0))
    if isinstance(base, SampleCloud):
        v = base.expect(f)
    else:
        try:
            v = expectation(base, f, eng)
        except DivergentIntegral:
            return DivergenceValue(f"polynomial({beta})", math.inf)
    return DivergenceValue(f"polynomial({beta})", max(v, 1.0) if abs(v - 1.0) < 1e-12 else v)


def tsallis_from_polynomial(i_beta: float, beta: float) -> float:
    """S_beta = (I_beta - 1) / beta."""
    if beta <= 0:
        raise InvalidInput("beta must be positive")
    if i_beta < 1.0 - 1e-12:
        raise InvalidInput("polynomial divergence is at least 1")
    return (i_beta - 1.0) / beta


def renyi_from_polynomial(i_beta: float, beta: float) -> float:
    """H_{beta+1} = log(I_beta) / beta."""
    if beta <= 0:
        raise InvalidInput("beta must be positive")
    if i_beta < 1.0 - 1e-12:
        raise InvalidInput("polynomial divergence is at least 1")
    if math.isinf(i_beta):
        return math.inf
    return math.log(max(i_beta, 1.0)) / beta


def total_variation(p, q, eng: ExpectationEngine = None) -> DivergenceValue:
    """(1/2) int |p - q|, or half the l1 gap of weights on a shared cloud."""
    if isinstance(p, SampleCloud) or isinstance(q, SampleCloud):
        if not (isinstance(p, SampleCloud) and isinstance(q, SampleCloud)):
            raise SupportMismatch("mixing a cloud with a density")
        if p.points.shape != q.points.shape or not np.array_equal(p.points, q.points):
            raise SupportMismatch("clouds must share an identical point set")
        return DivergenceValue("total_variation", 0.5 * float(np.abs(p.weights - q.weights).sum()))
    if not isinstance(p, Density) or not isinstance(q, Density):
        raise InvalidInput("arguments must both be densities or both clouds")
    if p.support != q.support:
        raise SupportMismatch("densities live on different supports")
    eng = eng or ExpectationEngine()

    def absdiff(x):
        return np.abs(np.asarray(p.pdf(x), dtype=float) - np.asarray(q.pdf(x), dtype=float))

    # integrate |p - q| against Lebesgue measure directly (dividing either
    # pdf back out would lose the region where that pdf vanishes)
    from .dist_core import _expect_1d, _expect_tensor

    if p.dim == 1:
        v = _expect_1d(_wrap_lebesgue(p), absdiff, eng)
    else:
        v = _expect_tensor(_wrap_lebesgue(p), absdiff, eng)
    return DivergenceValue("total_variation", min(max(0.5 * v, 0.0), 1.0))


def _wrap_lebesgue(d: Density) -> Density:
    """A unit 'density' on d's support (the caller supplies the real integrand)."""
    return Density(
        "custom",
        d.dim,
        d.support,
        {},
        lambda x: np.ones_like(np.asarray(x, dtype=float)),
        d._frozen,
    )
