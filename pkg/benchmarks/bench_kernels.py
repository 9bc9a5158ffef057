"""Benchmark the compiled kernels against the pure-Python fallback.

Both backends are importable side by side, so this script times the same
workloads on each and reports the speedup. Run from the repo root:

    python3 benchmarks/bench_kernels.py
    python3 benchmarks/bench_kernels.py --rows 4000 --repeat 5
"""

import argparse
import time

import numpy as np

from gridntl.kernels import METRIC_CODES, available_backends


def _time(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def bench_splitmix(impl, n):
    return lambda: impl.splitmix64_stream(12345, n)


def bench_grow_tree(impl, X, y, trees):
    def run():
        for t in range(trees):
            impl.grow_tree(X, y, 1000 + t, 4, len(y))
    return run


def bench_tree_apply(impl, tree, X, repeat_rows):
    def run():
        for _ in range(repeat_rows):
            impl.tree_apply(*tree, X)
    return run


def bench_knn(impl, train, query, k):
    def run():
        for code in METRIC_CODES.values():
            impl.knn_neighbors(train, query, k, code)
    return run


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--rows", type=int, default=2000,
                        help="training rows (default 2000)")
    parser.add_argument("--cols", type=int, default=20,
                        help="feature columns (default 20)")
    parser.add_argument("--trees", type=int, default=20,
                        help="trees per grow_tree benchmark (default 20)")
    parser.add_argument("--repeat", type=int, default=3,
                        help="repetitions, best time kept (default 3)")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    backends = available_backends()
    if "cython" not in backends:
        print("compiled backend unavailable; timing the fallback only")

    rng = np.random.default_rng(args.seed)
    X = np.ascontiguousarray(rng.normal(size=(args.rows, args.cols)))
    y = np.ascontiguousarray(rng.integers(0, 2, size=args.rows))
    query = np.ascontiguousarray(rng.normal(size=(200, args.cols)))
    ref = backends["python"]
    tree = ref.grow_tree(X, y, 7, 4, args.rows)

    cases = [
        ("splitmix64_stream (1e6 draws)",
         lambda impl: bench_splitmix(impl, 1_000_000)),
        (f"grow_tree x{args.trees} ({args.rows}x{args.cols})",
         lambda impl: bench_grow_tree(impl, X, y, args.trees)),
        ("tree_apply x50",
         lambda impl: bench_tree_apply(impl, tree, X, 50)),
        (f"knn_neighbors 3 metrics (200x{args.rows})",
         lambda impl: bench_knn(impl, X, query, 100)),
    ]

    width = max(len(name) for name, _ in cases)
    header = f"{'benchmark':<{width}}  " + "".join(
        f"{name:>12}" for name in backends) + ("     speedup"
                                               if len(backends) > 1 else "")
    print(header)
    print("-" * len(header))
    for name, make in cases:
        times = {b: _time(make(impl), args.repeat)
                 for b, impl in backends.items()}
        row = f"{name:<{width}}  " + "".join(
            f"{times[b] * 1000:>10.1f}ms" for b in backends)
        if len(backends) > 1:
            row += f"  {times['python'] / times['cython']:>9.1f}x"
        print(row)


if __name__ == "__main__":
    main()
