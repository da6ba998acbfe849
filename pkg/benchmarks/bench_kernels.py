"""Time the numba and numpy implementations of the hot loops side by side.

    python benchmarks/bench_kernels.py [--n 4096] [--repeat 20]
"""

import argparse
import time

import numpy as np

from sparsity_minimax import _hot, kernels
from sparsity_minimax._accel import HAVE_NUMBA


def best_of(fn, repeat):
    fn()  # warm-up, includes JIT compilation
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--n", type=int, default=4096)
    parser.add_argument("--repeat", type=int, default=20)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    y = rng.standard_normal(args.n)
    freqs = np.linspace(0.0, 1.5, 257)
    table = kernels.kappa_table(2.0)
    xabs = np.abs(y)
    cases = {
        "empirical CF, 257 frequencies": (
            lambda: _hot.cos_matvec_nb(freqs, y, np.ones(args.n)),
            lambda: _hot.cos_matvec_np(freqs, y, np.ones(args.n))),
        "spline table lookup": (
            lambda: _hot.spline_eval_nb(xabs, table.coef, table.h),
            lambda: _hot.spline_eval_np(xabs, table.coef, table.h)),
    }
    print(f"n={args.n}  numba available: {HAVE_NUMBA}")
    print(f"{'kernel':34s} {'numba [ms]':>11s} {'numpy [ms]':>11s} {'speed-up':>9s}")
    for name, (nb, npy) in cases.items():
        np.testing.assert_allclose(nb(), npy(), rtol=1e-12, atol=1e-12)
        t_nb = best_of(nb, args.repeat) * 1e3
        t_np = best_of(npy, args.repeat) * 1e3
        print(f"{name:34s} {t_nb:11.3f} {t_np:11.3f} {t_np / t_nb:9.2f}")


if __name__ == "__main__":
    main()
