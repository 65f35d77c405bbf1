"""Timing of the tilt-statistics kernels: numba against pure numpy.

The hot loop of both solvers evaluates, for a multiplier lambda on a fixed
node cloud, the normalizer and the moment/Jacobian blocks of the tilted
measure. Run with ENTILT_DISABLE_NUMBA=1 to confirm the numpy fallback is
selected, or without it to compare the compiled kernels.

Usage: python benchmarks/bench_kernels.py [n_nodes] [n_constraints] [reps]
"""
import sys
import time

import numpy as np

from entilt._kernels import (
    USE_NUMBA,
    exp_tilt_stats,
    exp_tilt_stats_numpy,
    poly_tilt_stats,
    poly_tilt_stats_numpy,
)


def make_problem(n, k, seed=0):
    rng = np.random.default_rng(seed)
    G = rng.standard_normal((n, k))
    w = rng.random(n)
    w /= w.sum()
    lam = 0.1 * rng.standard_normal(k)
    return G, w, lam


def clock(fn, args, reps):
    fn(*args)  # warm-up (and JIT compile for the numba path)
    t0 = time.perf_counter()
    for _ in range(reps):
        fn(*args)
    return (time.perf_counter() - t0) / reps


def main():
    n = int(sys.argv[1]) if len(sys.argv) > 1 else 200_000
    k = int(sys.argv[2]) if len(sys.argv) > 2 else 4
    reps = int(sys.argv[3]) if len(sys.argv) > 3 else 20
    G, w, lam = make_problem(n, k)

    print(f"nodes={n} constraints={k} reps={reps} numba_active={USE_NUMBA}")

    t_np = clock(exp_tilt_stats_numpy, (G, w, lam), reps)
    t_sel = clock(exp_tilt_stats, (G, w, lam), reps)
    print(f"exp_tilt_stats   numpy {t_np * 1e3:8.3f} ms   selected {t_sel * 1e3:8.3f} ms"
          f"   speedup x{t_np / t_sel:.2f}")

    args = (G, w, lam, 0.5)
    t_np = clock(poly_tilt_stats_numpy, args, reps)
    t_sel = clock(poly_tilt_stats, args, reps)
    print(f"poly_tilt_stats  numpy {t_np * 1e3:8.3f} ms   selected {t_sel * 1e3:8.3f} ms"
          f"   speedup x{t_np / t_sel:.2f}")

    # agreement check while we are here
    Z1, m1, S1 = exp_tilt_stats_numpy(G, w, lam)
    Z2, m2, S2 = exp_tilt_stats(G, w, lam)
    err = max(abs(Z1 - Z2), np.abs(m1 - m2).max(), np.abs(S1 - S2).max())
    print(f"max kernel disagreement (exp): {err:.3e}")


if __name__ == "__main__":
    main()
