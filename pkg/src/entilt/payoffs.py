"""Named constraint functions (payoff primitives) for moment views.

Each factory returns a vectorized callable carrying a ``kinks`` attribute,
the points where the function is non-smooth; the adaptive quadrature route
splits integrals there so far-out-of-the-money calls do not lose their tail.
Piecewise-linear payoffs also expose ``pl_knots``/``pl_terminal_slopes`` so
the polynomial-tilt feasibility check can be done exactly.
"""
from __future__ import annotations

import numpy as np

from .errors import InvalidInput

__all__ = ["call", "put", "indicator", "linear", "power", "from_spec"]


def _attach(f, kinks=(), pl_knots=None, pl_terminal_slopes=None):
    f.kinks = tuple(kinks)
    if pl_knots is not None:
        f.pl_knots = tuple(pl_knots)
        f.pl_terminal_slopes = tuple(pl_terminal_slopes)
    return f


def call(strike, discount=1.0):
    """discount * max(x - strike, 0)."""
    if discount <= 0:
        raise InvalidInput("discount must be positive")

    def f(x):
        return discount * np.maximum(np.asarray(x, dtype=float) - strike, 0.0)

    return _attach(f, kinks=(strike,), pl_knots=(strike,),
                   pl_terminal_slopes=(0.0, discount))


def put(strike, discount=1.0):
    """discount * max(strike - x, 0)."""
    if discount <= 0:
        raise InvalidInput("discount must be positive")

    def f(x):
        return discount * np.maximum(strike - np.asarray(x, dtype=float), 0.0)

    return _attach(f, kinks=(strike,), pl_knots=(strike,),
                   pl_terminal_slopes=(-discount, 0.0))


def indicator(lo=-np.inf, hi=np.inf):
    """1 on [lo, hi), 0 elsewhere."""
    if not lo < hi:
        raise InvalidInput("need lo < hi")

    def f(x):
        x = np.asarray(x, dtype=float)
        return ((x >= lo) & (x < hi)).astype(float)

    return _attach(f, kinks=tuple(v for v in (lo, hi) if np.isfinite(v)))


def linear(slope=1.0, intercept=0.0):
    def f(x):
        return slope * np.asarray(x, dtype=float) + intercept

    return _attach(f, pl_knots=(), pl_terminal_slopes=(slope, slope))


def power(exponent, shift=0.0):
    """(x - shift) ** exponent."""

    def f(x):
        return (np.asarray(x, dtype=float) - shift) ** exponent

    return _attach(f)


_FACTORIES = {
    "call": lambda s: call(s["strike"], s.get("discount", 1.0)),
    "put": lambda s: put(s["strike"], s.get("discount", 1.0)),
    "indicator": lambda s: indicator(s.get("lo", -np.inf), s.get("hi", np.inf)),
    "linear": lambda s: linear(s.get("slope", 1.0), s.get("intercept", 0.0)),
    "power": lambda s: power(s["exponent"], s.get("shift", 0.0)),
}


def from_spec(spec: dict):
    """Build a payoff from a JSON-style spec like {"fn": "call", "strike": 55}."""
    if not isinstance(spec, dict) or "fn" not in spec:
        raise InvalidInput("payoff spec needs an 'fn' key")
    name = spec["fn"]
    if name not in _FACTORIES:
        raise InvalidInput(f"unknown payoff primitive {name!r}")
    try:
        return _FACTORIES[name](spec)
    except KeyError as exc:
        raise InvalidInput(f"payoff {name!r} missing field {exc}") from None
