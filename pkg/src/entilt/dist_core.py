"""Prior distributions and the shared expectation engine.

Analytic densities (1-D families, N-D Gaussian, user-supplied pdfs) and
weighted sample clouds, plus a deterministic expectation engine:

* 1-D unbounded supports go through scipy's adaptive quadrature, with a
  widening-truncation guard that raises :class:`DivergentIntegral` when
  the estimate keeps drifting as the cutoff doubles,
* 2-D supports use tensor Gauss-Legendre on rationally transformed axes,
* higher dimensions fall back to seeded Monte Carlo.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import integrate, stats

from .errors import DegenerateWeights, DivergentIntegral, InvalidInput

__all__ = [
    "Density",
    "SampleCloud",
    "ExpectationEngine",
    "expectation",
    "sample",
    "reweight",
    "quadrature_cloud",
]


def _check_cov(cov):
    cov = np.asarray(cov, dtype=float)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise InvalidInput("covariance must be a square matrix")
    if not np.allclose(cov, cov.T, atol=1e-10):
        raise InvalidInput("covariance must be symmetric")
    eig = np.linalg.eigvalsh(cov)
    if eig.min() < -1e-10 * max(1.0, abs(eig.max())):
        raise InvalidInput("covariance must be positive semidefinite")
    return cov


@dataclass(frozen=True)
class Density:
    """An analytic prior density with per-dimension support.

    Use the classmethod constructors; ``custom`` pdfs are trusted to be
    normalized (see :meth:`validate_normalization`).
    """

    kind: str
    dim: int
    support: Tuple[Tuple[float, float], ...]
    params: dict = field(compare=False)
    _pdf: Callable = field(compare=False, repr=False)
    _frozen: object = field(default=None, compare=False, repr=False)
    _sampler: Optional[Callable] = field(default=None, compare=False, repr=False)

    # -- constructors -------------------------------------------------

    @classmethod
    def exponential(cls, rate: float) -> "Density":
        if rate <= 0:
            raise InvalidInput("rate must be positive")
        fr = stats.expon(scale=1.0 / rate)
        return cls("exponential", 1, ((0.0, math.inf),), {"rate": rate}, fr.pdf, fr)

    @classmethod
    def pareto(cls, alpha: float) -> "Density":
        """pdf (alpha-1) / (1+x)^alpha on [0, inf); needs alpha > 1."""
        if alpha <= 1:
            raise InvalidInput("alpha must exceed 1 for an integrable pdf")
        fr = stats.lomax(c=alpha - 1.0)
        return cls("pareto", 1, ((0.0, math.inf),), {"alpha": alpha}, fr.pdf, fr)

    @classmethod
    def lognormal(cls, mu: float, sigma2: float) -> "Density":
        if sigma2 <= 0:
            raise InvalidInput("sigma2 must be positive")
        fr = stats.lognorm(s=math.sqrt(sigma2), scale=math.exp(mu))
        return cls("lognormal", 1, ((0.0, math.inf),), {"mu": mu, "sigma2": sigma2}, fr.pdf, fr)

    @classmethod
    def gamma(cls, shape: float, rate: float) -> "Density":
        if shape <= 0 or rate <= 0:
            raise InvalidInput("shape and rate must be positive")
        fr = stats.gamma(a=shape, scale=1.0 / rate)
        return cls("gamma", 1, ((0.0, math.inf),), {"shape": shape, "rate": rate}, fr.pdf, fr)

    @classmethod
    def student_t(cls, dof: float, loc: float = 0.0, scale: float = 1.0) -> "Density":
        if dof <= 0 or scale <= 0:
            raise InvalidInput("dof and scale must be positive")
        fr = stats.t(df=dof, loc=loc, scale=scale)
        return cls(
            "student_t",
            1,
            ((-math.inf, math.inf),),
            {"dof": dof, "loc": loc, "scale": scale},
            fr.pdf,
            fr,
        )

    @classmethod
    def gaussian_nd(cls, mean, cov) -> "Density":
        mean = np.atleast_1d(np.asarray(mean, dtype=float))
        cov = np.atleast_2d(np.asarray(cov, dtype=float))
        cov = _check_cov(cov)
        if cov.shape[0] != mean.shape[0]:
            raise InvalidInput("mean and covariance dimensions disagree")
        d = mean.shape[0]
        fr = stats.multivariate_normal(mean=mean, cov=cov, allow_singular=True)
        if d == 1:
            fr1 = stats.norm(loc=mean[0], scale=math.sqrt(cov[0, 0]))
            pdf = fr1.pdf
            frozen = fr1
        else:
            pdf = fr.pdf
            frozen = fr
        return cls(
            "gaussian_nd",
            d,
            tuple((-math.inf, math.inf) for _ in range(d)),
            {"mean": mean, "cov": cov},
            pdf,
            frozen,
        )

    @classmethod
    def custom(cls, pdf: Callable, support, sampler: Optional[Callable] = None) -> "Density":
        """Trusted-normalized pdf; ``support`` is (lo, hi) or a sequence of them."""
        support = np.asarray(support, dtype=float)
        if support.ndim == 1:
            support = support[None, :]
        if support.shape[1] != 2:
            raise InvalidInput("support must be (lo, hi) pairs")
        if np.any(support[:, 0] >= support[:, 1]):
            raise InvalidInput("support intervals must have lo < hi")
        sup = tuple((float(a), float(b)) for a, b in support)
        return cls("custom", len(sup), sup, {}, pdf, None, sampler)

    # -- evaluation ---------------------------------------------------

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        v = np.asarray(self._pdf(x), dtype=float)
        return v

    def mean(self):
        """Analytic mean when available, else None."""
        if self.kind == "gaussian_nd":
            return np.array(self.params["mean"], dtype=float)
        if self._frozen is not None and hasattr(self._frozen, "mean"):
            m = self._frozen.mean()
            return np.atleast_1d(np.asarray(m, dtype=float))
        return None

    def quantile(self, p: float, dim: int = 0) -> float:
        """Per-axis quantile; used for truncation bounds and probe grids."""
        if self.dim == 1 and self._frozen is not None and hasattr(self._frozen, "ppf"):
            return float(self._frozen.ppf(p))
        lo, hi = self.support[dim]
        if math.isfinite(lo) and math.isfinite(hi):
            return lo + p * (hi - lo)
        # crude geometric search against the 1-D marginal along `dim`
        if self.dim != 1:
            raise InvalidInput("quantile only available for 1-D densities without ppf")
        base = lo if math.isfinite(lo) else 0.0
        b = 1.0
        for _ in range(60):
            mass, _ = integrate.quad(lambda t: float(self.pdf(t)), base, base + b, limit=100)
            if mass >= p:
                break
            b *= 2.0
        return base + b

    def validate_normalization(self, eng: "ExpectationEngine" = None) -> float:
        """Integrate the pdf; warn (not rescale) when off unity beyond tolerance."""
        eng = eng or ExpectationEngine()
        one = lambda x: np.ones(np.asarray(x).shape[0]) if np.ndim(x) else 1.0
        total = expectation(self, one, eng)
        if abs(total - 1.0) > 1e-6:
            warnings.warn(
                f"pdf integrates to {total:.8g}, not 1; custom densities are trusted, not rescaled",
                stacklevel=2,
            )
        return total


@dataclass(frozen=True)
class SampleCloud:
    """Weighted point set; weights are nonnegative and sum to one."""

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        w = np.asarray(self.weights, dtype=float)
        if pts.shape[0] != w.shape[0]:
            raise InvalidInput("points and weights length mismatch")
        if np.any(w < 0):
            raise InvalidInput("weights must be nonnegative")
        if abs(w.sum() - 1.0) > 1e-12:
            raise InvalidInput("weights must sum to 1 within 1e-12")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def mean(self) -> np.ndarray:
        return self.weights @ self.points

    def expect(self, phi: Callable) -> float:
        return float(self.weights @ _eval_vec(phi, self.points))


@dataclass(frozen=True)
class ExpectationEngine:
    """Deterministic integral estimator shared by every solver.

    method: 'auto' picks adaptive 1-D quadrature, tensor quadrature for
    2-D and seeded Monte Carlo for 3-D and up.
    """

    method: str = "auto"
    abs_tol: float = 1e-10
    rel_tol: float = 1e-8
    truncation_mass: float = 1e-10
    seed: int = 0
    n_samples: int = 100_000

    def __post_init__(self):
        if self.method not in ("auto", "adaptive_quadrature_1d", "tensor_quadrature", "monte_carlo"):
            raise InvalidInput(f"unknown engine method {self.method!r}")
        for name in ("abs_tol", "rel_tol", "truncation_mass"):
            v = getattr(self, name)
            if not (0.0 < v < 1.0):
                raise InvalidInput(f"{name} must lie in (0, 1)")
        if self.n_samples < 1:
            raise InvalidInput("n_samples must be positive")


def _eval_vec(phi, pts):
    """Evaluate phi on an (n, d) array, accepting scalar-only callables."""
    x = pts[:, 0] if pts.shape[1] == 1 else pts
    try:
        v = np.asarray(phi(x), dtype=float)
        if v.shape == (pts.shape[0],):
            return v
        if v.shape == () and pts.shape[0] == 1:
            return v[None]
    except Exception:
        pass
    return np.array([float(phi(p[0] if pts.shape[1] == 1 else p)) for p in pts])


# -- 1-D adaptive route ----------------------------------------------


def _quad_interval(f, a, b, eng, pts=()):
    pts = sorted(p for p in pts if a < p < b)
    edges = [a] + pts + [b]
    total = 0.0
    err = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            v, e = integrate.quad(f, lo, hi, epsabs=eng.abs_tol, epsrel=eng.rel_tol, limit=200)
        total += v
        err += e
    return total, err


def _expect_1d(d: Density, phi, eng: ExpectationEngine) -> float:
    lo, hi = d.support[0]
    kinks = tuple(getattr(phi, "kinks", ()))

    def f(x):
        v = phi(x) * float(d.pdf(x))
        return v

    with np.errstate(over="ignore", invalid="ignore"):
        val, err = _quad_interval(f, lo, hi, eng, kinks)

    bound = max(eng.abs_tol, eng.rel_tol * abs(val)) * 50
    suspicious = not math.isfinite(val) or err > bound
    if not suspicious and not math.isfinite(hi):
        # cheap tail probe: growing integrand far out signals a lost tail
        b0 = max(abs(d.quantile(1.0 - eng.truncation_mass)), 1.0)
        with np.errstate(over="ignore", invalid="ignore"):
            probe = [float(np.ravel(np.abs(f(b0 * 2.0 ** j)))[0]) for j in (0, 1, 2)]
        if (not all(math.isfinite(p) for p in probe)) or (
            probe[2] > eng.abs_tol and probe[2] >= probe[1] >= probe[0] and probe[2] > 0
        ):
            suspicious = True
    if not suspicious:
        return val
    return _truncation_guard(d, f, eng)


def _truncation_guard(d: Density, f, eng: ExpectationEngine) -> float:
    """Declare divergence when doubling the cutoff twice keeps moving the estimate."""
    lo, hi = d.support[0]
    if math.isfinite(lo) and math.isfinite(hi):
        raise DivergentIntegral("integral did not converge on a bounded support")
    if math.isfinite(lo):
        b0 = max(abs(d.quantile(1.0 - eng.truncation_mass)), abs(lo) + 1.0)
        cuts = [(lo, b0), (lo, 2 * b0), (lo, 4 * b0)]
    elif math.isfinite(hi):
        b0 = max(abs(d.quantile(eng.truncation_mass)), abs(hi) + 1.0)
        cuts = [(-b0, hi), (-2 * b0, hi), (-4 * b0, hi)]
    else:
        b0 = max(abs(d.quantile(eng.truncation_mass)), abs(d.quantile(1.0 - eng.truncation_mass)), 1.0)
        cuts = [(-b0, b0), (-2 * b0, 2 * b0), (-4 * b0, 4 * b0)]
    with np.errstate(over="ignore", invalid="ignore"):
        vals = []
        for a, b in cuts:
            v, _ = _quad_interval(f, a, b, eng)
            vals.append(v)
    if not all(math.isfinite(v) for v in vals):
        raise DivergentIntegral("integrand overflows on the truncated domain")
    tol = 10.0 * eng.rel_tol
    scale0 = max(abs(vals[1]), eng.abs_tol)
    scale1 = max(abs(vals[2]), eng.abs_tol)
    d1 = abs(vals[1] - vals[0]) / scale0
    d2 = abs(vals[2] - vals[1]) / scale1
    if d1 > tol and d2 > tol:
        raise DivergentIntegral(
            f"estimate moved by {d1:.3g} then {d2:.3g} as the cutoff doubled"
        )
    return vals[2]


# -- tensor quadrature (2-D) -----------------------------------------


def _axis_nodes(lo, hi, order):
    t, w = leggauss(order)
    if math.isfinite(lo) and math.isfinite(hi):
        x = 0.5 * (hi + lo) + 0.5 * (hi - lo) * t
        jac = np.full_like(x, 0.5 * (hi - lo))
    elif math.isfinite(lo):
        s = 0.5 * (t + 1.0)  # (0, 1)
        x = lo + s / (1.0 - s)
        jac = 0.5 / (1.0 - s) ** 2
    elif math.isfinite(hi):
        s = 0.5 * (t + 1.0)
        x = hi - s / (1.0 - s)
        jac = 0.5 / (1.0 - s) ** 2
    else:
        x = t / (1.0 - t * t)
        jac = (1.0 + t * t) / (1.0 - t * t) ** 2
    return x, w * jac


def _tensor_value(d: Density, phi, order: int) -> float:
    axes = [_axis_nodes(lo, hi, order) for lo, hi in d.support]
    grids = np.meshgrid(*[a[0] for a in axes], indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=-1)
    wts = axes[0][1]
    for a in axes[1:]:
        wts = np.outer(wts, a[1])
    wts = wts.ravel()
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        dens = np.nan_to_num(np.asarray(d.pdf(pts), dtype=float).ravel(), nan=0.0)
        vals = _eval_vec(phi, pts)
        # zero-density nodes contribute nothing even when phi overflows there
        prod = np.where(dens > 0.0, wts * dens * vals, 0.0)
    return float(np.sum(prod))


def _expect_tensor(d: Density, phi, eng: ExpectationEngine) -> float:
    v1 = _tensor_value(d, phi, 64)
    v2 = _tensor_value(d, phi, 96)
    if abs(v2 - v1) > 10 * max(eng.abs_tol, eng.rel_tol * abs(v2)):
        v3 = _tensor_value(d, phi, 160)
        if abs(v3 - v2) > max(100 * eng.abs_tol, 1e-4 * abs(v3)):
            raise DivergentIntegral("tensor quadrature failed to stabilize")
        return v3
    return v2


def _expect_mc(d: Density, phi, eng: ExpectationEngine) -> float:
    cloud = sample(d, eng.n_samples, eng.seed)
    return cloud.expect(phi)


def expectation(d: Density, phi: Callable, eng: ExpectationEngine) -> float:
    """Estimate the integral of ``phi`` against the density ``d``."""
    if isinstance(d, SampleCloud):
        return d.expect(phi)
    if eng.method == "monte_carlo":
        return _expect_mc(d, phi, eng)
    if d.dim == 1 and eng.method in ("auto", "adaptive_quadrature_1d"):
        return _expect_1d(d, phi, eng)
    if d.dim <= 2 and eng.method in ("auto", "tensor_quadrature"):
        return _expect_tensor(d, phi, eng)
    return _expect_mc(d, phi, eng)


def sample(d: Density, n: int, seed: int) -> SampleCloud:
    """Draw ``n`` equally weighted points, deterministic per seed."""
    if n < 1:
        raise InvalidInput("n must be at least 1")
    rng = np.random.default_rng(seed)
    if d.kind == "custom":
        if d._sampler is None:
            raise InvalidInput("custom density has no sampler")
        pts = np.asarray(d._sampler(n, rng), dtype=float)
    elif d.kind == "gaussian_nd":
        mean = d.params["mean"]
        cov = d.params["cov"]
        pts = rng.multivariate_normal(mean, cov, size=n, method="cholesky" if
                                      np.linalg.matrix_rank(cov) == cov.shape[0] else "svd")
    elif d._frozen is not None:
        pts = np.asarray(d._frozen.rvs(size=n, random_state=rng), dtype=float)
    else:  # pragma: no cover
        raise InvalidInput(f"sampling not supported for kind {d.kind!r}")
    pts = pts.reshape(n, -1)
    return SampleCloud(pts, np.full(n, 1.0 / n))


def reweight(cloud: SampleCloud, ratio: Callable) -> SampleCloud:
    """Multiply weights by a nonnegative ratio and renormalize; points unchanged."""
    vals = _eval_vec(ratio, cloud.points)
    if np.any(vals < 0):
        raise InvalidInput("ratio must be nonnegative at every point")
    w = cloud.weights * vals
    total = w.sum()
    if total == 0.0:
        raise DegenerateWeights("all reweighted weights vanish")
    return SampleCloud(cloud.points, w / total)


def quadrature_cloud(d: Density, n: int = 800) -> SampleCloud:
    """Gauss-Legendre node cloud on the (transformed) support.

    Weights are pdf x jacobian x rule weight, renormalized to one; used by
    solvers as a fast fixed grid (final residuals are re-checked adaptively).
    """
    if d.dim == 1:
        x, w = _axis_nodes(*d.support[0], n)
        with np.errstate(over="ignore", invalid="ignore"):
            dens = np.nan_to_num(np.asarray(d.pdf(x), dtype=float), nan=0.0)
        wt = np.clip(w * dens, 0.0, None)
        total = wt.sum()
        if total <= 0:
            raise DegenerateWeights("density vanishes on the quadrature grid")
        keep = wt > 0.0
        return SampleCloud(x[keep, None], wt[keep] / total)
    order = max(int(round(n ** (1.0 / d.dim))), 8)
    axes = [_axis_nodes(lo, hi, order) for lo, hi in d.support]
    grids = np.meshgrid(*[a[0] for a in axes], indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=-1)
    wts = axes[0][1]
    for a in axes[1:]:
        wts = np.outer(wts, a[1])
    wts = wts.ravel()
    with np.errstate(over="ignore", invalid="ignore"):
        dens = np.nan_to_num(np.asarray(d.pdf(pts), dtype=float).ravel(), nan=0.0)
    wt = np.clip(wts * dens, 0.0, None)
    total = wt.sum()
    if total <= 0:
        raise DegenerateWeights("density vanishes on the quadrature grid")
    keep = wt > 0.0
    return SampleCloud(pts[keep], wt[keep] / total)
