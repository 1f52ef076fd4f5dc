"""Benchmark the compiled codebook kernels against the numpy fallback.

The simulator refits a codebook per node per round, so fit latency on
small-to-medium sample sets dominates its runtime. Run:

    python benchmarks/bench_kernels.py
"""

import time

import numpy as np

from gossipquant import kernels
from gossipquant.kernels import py_backend


def time_fn(fn, *args, repeats=7):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - start)
    return best


def main():
    if kernels.BACKEND != "compiled":
        print("compiled backend unavailable; timing the numpy fallback against itself")
    rng = np.random.default_rng(0)
    print(f"{'case':<28}{'compiled':>12}{'numpy':>12}{'speedup':>10}")
    for n, s in [(200, 8), (2000, 16), (2000, 256), (100000, 16), (100000, 256)]:
        x = rng.random(n)
        w = np.ones(n)
        args = (x, w, s, 1e-9, 200)
        t_c = time_fn(kernels.fit_codebook, *args)
        t_p = time_fn(py_backend.fit_codebook, *args)
        print(f"fit n={n:<7} s={s:<6}{t_c*1e3:>11.3f}ms{t_p*1e3:>10.3f}ms{t_p/t_c:>9.1f}x")
    for n, s in [(2000, 16), (100000, 256)]:
        x = rng.random(n)
        b = np.linspace(0, 1, s + 1)
        t_c = time_fn(kernels.assign_bins, x, b)
        t_p = time_fn(py_backend.assign_bins, x, b)
        print(f"assign n={n:<7} s={s:<4}{t_c*1e3:>11.3f}ms{t_p*1e3:>10.3f}ms{t_p/t_c:>9.1f}x")


if __name__ == "__main__":
    main()
