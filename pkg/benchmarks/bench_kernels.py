"""Wall-clock comparison of the numba kernels against their numpy twins.

Run with ``python3 benchmarks/bench_kernels.py [--repeat N]``. The first
numba call of each kernel is timed separately as compilation/cache load.
"""

import argparse
import time

import numpy as np

from riskwild import kernels as K


def _time(fn, args, kwargs, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args, **kwargs)
        best = min(best, time.perf_counter() - t0)
    return best


def cases(rng):
    c = rng.standard_normal(60)
    C = rng.standard_normal((2, 6))
    A = rng.standard_normal((6, 6))
    s, U = np.linalg.eigh(A @ A.T + 0.5 * np.eye(6))
    tc = 0.1 * rng.standard_normal((2, 6))
    return {
        "ball_ascent": ((c, np.zeros(60), 1.0), {"step": 0.01, "max_iter": 2000, "tol": 0.0}),
        "sphere_grid_max": ((rng.standard_normal(4),), {"points": 5, "levels": 20}),
        "ellipsoid_multiplier": ((rng.uniform(0, 2, 200), rng.uniform(0.5, 3, 200), 0.1), {}),
        "bounded_linear_ascent": ((C, tc, U, s, 0.3, 0.5), {"step": 0.05, "max_iter": 300}),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(0)
    print(f"{'kernel':<24}{'first numba':>14}{'numba':>12}{'numpy':>12}{'speedup':>10}")
    for name, (a, kw) in cases(rng).items():
        fnb, fnp = getattr(K, f"{name}_numba"), getattr(K, f"{name}_numpy")
        t0 = time.perf_counter()
        fnb(*a, **kw)
        first = time.perf_counter() - t0
        tb = _time(fnb, a, kw, args.repeat)
        tp = _time(fnp, a, kw, args.repeat)
        print(f"{name:<24}{first:>13.4f}s{tb:>11.5f}s{tp:>11.5f}s{tp / tb:>9.1f}x")


if __name__ == "__main__":
    main()
