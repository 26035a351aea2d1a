"""Time the compiled kernels against their pure-Python twins.

Usage: python3 benchmarks/bench_kernels.py [--scale 1.0] [--repeat 3]

Both backends receive identical inputs; outputs are compared before timing
so the table only reports kernels that agree.
"""
import argparse
import time

import numpy as np

from pomdpkit import _pykernels

try:
    from pomdpkit import _kernels
except ImportError:  # pragma: no cover
    _kernels = None


def _cases(scale):
    rng = np.random.default_rng(0)
    n = int(20_000 * scale)
    X = 4
    P = rng.random((X, X))
    P /= P.sum(1, keepdims=True)
    B = rng.random((X, 3))
    B /= B.sum(1, keepdims=True)
    pi0 = np.full(X, 1.0 / X)
    ys = rng.integers(0, 3, n).astype(np.int64)
    S = 5
    m = rng.random((n, S))
    rewards = rng.random((2, 4))
    cases = {
        "sample_chain": (np.cumsum(P, 1), np.cumsum(pi0), rng.random(n)),
        "hmm_filter": (P, B, pi0, ys),
        "ruler_chain": (0, rng.integers(0, S - 1, n).astype(np.int64), m, rng.random(n), rng.random(n), 1),
        "regret_matching": (rewards, 2, np.zeros(2, dtype=np.int64), 0.01, 2.0, rng.random((n, 2))),
        "recem_gaussian": (np.array([[0.9, 0.1], [0.1, 0.9]]), np.array([0.5, 0.5]), np.array([-0.5, 1.5]),
                           np.array([100.0, 100.0]), rng.normal(0.5, 0.5, n), 0.1, 0.01, 1e-3, 1, -5.0, 5.0, 0),
    }
    return n, cases


def _same(a, b):
    if isinstance(a, tuple):
        return all(_same(x, y) for x, y in zip(a, b))
    return np.array_equal(np.asarray(a), np.asarray(b))


def _time(fn, args, repeat):
    best = np.inf
    for _ in range(repeat):
        t = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t)
    return best


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scale", type=float, default=1.0, help="multiplies the step count (20000)")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    if _kernels is None:
        print("compiled extension not built; nothing to compare")
        return 1
    n, cases = _cases(args.scale)
    print(f"steps per kernel: {n}")
    print(f"{'kernel':<18}{'python s':>12}{'cython s':>12}{'speedup':>10}  equal")
    for name, a in cases.items():
        py, cy = getattr(_pykernels, name), getattr(_kernels, name)
        equal = _same(py(*a), cy(*a))
        tp, tc = _time(py, a, args.repeat), _time(cy, a, args.repeat)
        print(f"{name:<18}{tp:>12.4f}{tc:>12.5f}{tp / tc:>10.1f}  {equal}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
