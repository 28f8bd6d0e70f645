"""Compare the compiled and numpy kernel backends on identical inputs.

Usage: python benchmarks/bench_kernels.py [--repeat N] [--size N]
"""
import argparse
import timeit

import numpy as np

from sedid import _kernels_py

try:
    from sedid import _kernels as _compiled
except ImportError:
    _compiled = None


def cases(size):
    rng = np.random.default_rng(0)
    a = rng.standard_normal((size // 8, 64))
    b = rng.standard_normal((size // 8, 64))
    scores = rng.integers(0, size // 4, size).astype(np.float64)
    labels = rng.integers(0, 2, size).astype(np.int64)
    return {
        "splitmix64": (17, 3, size),
        "std_normal": (17, 3, size),
        "row_sq_dist": (a, b),
        "tie_groups": (scores, labels),
    }


def same(x, y):
    if isinstance(x, tuple):
        return all(same(u, v) for u, v in zip(x, y))
    return np.array_equal(np.asarray(x), np.asarray(y))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--size", type=int, default=200_000)
    args = ap.parse_args(argv)
    if _compiled is None:
        print("compiled extension not built; run: pip install -e . --no-build-isolation")
        return 1
    print(f"{'kernel':<12} {'python ms':>10} {'compiled ms':>12} {'speedup':>8}  identical")
    for name, call_args in cases(args.size).items():
        py, cy = getattr(_kernels_py, name), getattr(_compiled, name)
        t_py = min(timeit.repeat(lambda: py(*call_args), number=1, repeat=args.repeat)) * 1e3
        t_cy = min(timeit.repeat(lambda: cy(*call_args), number=1, repeat=args.repeat)) * 1e3
        ok = same(py(*call_args), cy(*call_args))
        print(f"{name:<12} {t_py:>10.3f} {t_cy:>12.3f} {t_py / t_cy:>7.1f}x  {ok}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
