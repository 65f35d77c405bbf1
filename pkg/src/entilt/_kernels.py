"""Hot inner-loop kernels for sample-backed solves.

Every sample-cloud solver iteration reduces to fused passes over an
``(n, k)`` matrix ``G`` of constraint values (``n`` points, ``k``
constraints): tilt weights, normalizer, first moments and second-moment
matrix in one sweep.  The numba versions avoid the extra temporaries of
the multi-pass numpy route; set ``ENTILT_DISABLE_NUMBA=1`` to force the
pure-numpy fallback (``benchmarks/bench_kernels.py`` compares the two).
"""
from __future__ import annotations

import os

import numpy as np

USE_NUMBA = os.environ.get("ENTILT_DISABLE_NUMBA", "0") not in ("1", "true", "yes")

if USE_NUMBA:
    try:
        from numba import njit
    except ImportError:  # pragma: no cover
        USE_NUMBA = False


def _exp_tilt_stats_np(G, w, lam):
    s = G @ lam
    # the max is taken over carrying nodes only: a zero-weight far node with
    # a huge tilt argument would otherwise underflow everything else to 0
    live = w > 0.0
    s_max = np.max(s[live]) if np.any(live) else 0.0
    e = np.zeros_like(w)
    e[live] = w[live] * np.exp(s[live] - s_max)
    Z = e.sum()
    if Z <= 0.0:
        k = G.shape[1]
        return 0.0, np.zeros(k), np.zeros((k, k))
    m = (G.T @ e) / Z
    S = (G.T * e) @ G / Z
    return Z * np.exp(s_max), m, S


def _poly_tilt_stats_np(G, w, lam, beta):
    base = 1.0 + beta * (G @ lam)
    min_base = base.min() if base.size else 1.0
    b = np.clip(base, 0.0, None)
    p = b ** (1.0 / beta)
    q = np.where(b > 0.0, b ** (1.0 / beta - 1.0), 0.0)
    wp = w * p
    wq = w * q
    Z = wp.sum()
    num = G.T @ wp
    u = G.T @ wq
    J = (G.T * wq) @ G
    return Z, num, u, J, min_base


if USE_NUMBA:

    @njit(cache=True)
    def _exp_tilt_stats_nb(G, w, lam):  # pragma: no cover - compiled
        n, k = G.shape
        s_max = -1e308
        s = np.empty(n)
        for i in range(n):
            acc = 0.0
            for j in range(k):
                acc += G[i, j] * lam[j]
            s[i] = acc
            if w[i] > 0.0 and acc > s_max:
                s_max = acc
        if s_max <= -1e308:
            s_max = 0.0
        Z = 0.0
        m = np.zeros(k)
        S = np.zeros((k, k))
        for i in range(n):
            if w[i] <= 0.0:
                continue
            e = w[i] * np.exp(s[i] - s_max)
            Z += e
            for j in range(k):
                gj = G[i, j]
                m[j] += e * gj
                for l in range(j, k):
                    S[j, l] += e * gj * G[i, l]
        if Z <= 0.0:
            return 0.0, m, S
        for j in range(k):
            m[j] /= Z
            for l in range(j, k):
                S[j, l] /= Z
                S[l, j] = S[j, l]
        return Z * np.exp(s_max), m, S

    @njit(cache=True)
    def _poly_tilt_stats_nb(G, w, lam, beta):  # pragma: no cover - compiled
        n, k = G.shape
        inv_b = 1.0 / beta
        Z = 0.0
        num = np.zeros(k)
        u = np.zeros(k)
        J = np.zeros((k, k))
        min_base = 1e308
        for i in range(n):
            base = 1.0
            for j in range(k):
                base += beta * G[i, j] * lam[j]
            if base < min_base:
                min_base = base
            if base <= 0.0:
                continue
            p = base ** inv_b
            q = base ** (inv_b - 1.0)
            wp = w[i] * p
            wq = w[i] * q
            Z += wp
            for j in range(k):
                gj = G[i, j]
                num[j] += wp * gj
                u[j] += wq * gj
                for l in range(j, k):
                    J[j, l] += wq * gj * G[i, l]
        for j in range(k):
            for l in range(j, k):
                J[l, j] = J[j, l]
        if n == 0:
            min_base = 1.0
        return Z, num, u, J, min_base

    exp_tilt_stats = _exp_tilt_stats_nb
    poly_tilt_stats = _poly_tilt_stats_nb
else:
    exp_tilt_stats = _exp_tilt_stats_np
    poly_tilt_stats = _poly_tilt_stats_np

# numpy reference implementations stay importable for the benchmark/tests
exp_tilt_stats_numpy = _exp_tilt_stats_np
poly_tilt_stats_numpy = _poly_tilt_stats_np
