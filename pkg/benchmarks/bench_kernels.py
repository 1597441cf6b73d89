"""Time the compiled and numpy tree builders on identical inputs.

    python benchmarks/bench_kernels.py [--rows 400] [--features 16] [--repeat 20]

Checks that both paths return identical trees before reporting timings.
"""
import argparse
import time

import numpy as np

from featforge.kernels import _numba, _numpy


def make_inputs(rows, features, classification, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((rows, features))
    if classification:
        y = (X[:, 0] * X[:, 1] > 0).astype(float) + (X[:, 2] > 1)
        n_classes = 3
    else:
        y = X[:, 0] * X[:, 1] + 0.1 * rng.standard_normal(rows)
        n_classes = 0
    max_depth = 8
    max_nodes = min(2 ** (max_depth + 1) - 1, 2 * rows - 1)
    keys = rng.random((max_nodes, features))
    n_sub = max(1, round(features / 3))
    return X, y, n_classes, max_depth, 1, keys, n_sub


def best_of(fn, args, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--rows", type=int, default=400)
    ap.add_argument("--features", type=int, default=16)
    ap.add_argument("--repeat", type=int, default=20)
    a = ap.parse_args()

    print(f"{'task':<6} {'rows':>6} {'feat':>5} {'numba ms':>10} {'numpy ms':>10} {'speedup':>8}")
    for classification in (True, False):
        args = make_inputs(a.rows, a.features, classification)
        t0 = time.perf_counter()
        fast = _numba.build_tree(*args)  # first call compiles or loads the cache
        compile_s = time.perf_counter() - t0
        slow = _numpy.build_tree(*args)
        for u, v in zip(fast, slow):
            assert np.array_equal(u, v), "backends disagree"
        tn = best_of(_numba.build_tree, args, a.repeat)
        tp = best_of(_numpy.build_tree, args, max(1, a.repeat // 4))
        task = "cls" if classification else "reg"
        print(f"{task:<6} {a.rows:>6} {a.features:>5} {tn * 1e3:>10.3f} {tp * 1e3:>10.3f} "
              f"{tp / tn:>7.1f}x   (first call {compile_s:.2f}s)")


if __name__ == "__main__":
    main()
