"""Compare the numba and numpy tree kernels.

Times each split-search and traversal kernel on one synthetic frontier, then
one end-to-end bagging and gbm fit per backend (each fit in a fresh
interpreter, since the backend is chosen at import time).

    python benchmarks/bench_kernels.py --n 20000 --p 41 --nodes 8
"""
from __future__ import annotations

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from ensembleguard.trees import _kernels_numba as kb
from ensembleguard.trees import _kernels_numpy as kn
from ensembleguard.trees.tree import sorted_order

FIT_SCRIPT = """
import time, numpy as np
from ensembleguard.trees import BoostConfig, train_bagging, train_boosted
rng = np.random.default_rng(0)
X = np.round(rng.normal(size=({n}, {p})), 2)
y = (X[:, 0] + X[:, 1] > 0).astype(int) + (X[:, 2] > 1)
t0 = time.perf_counter(); train_bagging(X, y, n_estimators=5, seed=0, n_classes=3)
t1 = time.perf_counter(); train_boosted(X, y, BoostConfig(n_rounds=5), flavor="gbm", n_classes=3)
t2 = time.perf_counter(); print(t1 - t0, t2 - t1)
"""


def frontier(n, p, nodes, C, seed=0):
    rng = np.random.default_rng(seed)
    X = np.round(rng.normal(size=(n, p)), 2)
    y = rng.integers(0, C, n)
    w = np.ones(n)
    node_of = rng.integers(0, nodes, n).astype(np.int64)
    counts = np.zeros((nodes, C))
    np.add.at(counts, (node_of, y), w)
    r, h = rng.normal(size=n), rng.random(n) + 0.1
    node_r = np.bincount(node_of, weights=r, minlength=nodes)
    node_h = np.bincount(node_of, weights=h, minlength=nodes)
    node_c = np.bincount(node_of, minlength=nodes).astype(float)
    XT = np.ascontiguousarray(X.T)
    order = sorted_order(X)
    depth = int(np.log2(nodes)) + 3
    size = 2 ** (depth + 1) - 1
    feature = np.where(np.arange(size) < 2 ** depth - 1, rng.integers(0, p, size), -1)
    left = np.where(feature >= 0, 2 * np.arange(size) + 1, -1)
    right = np.where(feature >= 0, 2 * np.arange(size) + 2, -1)
    return {
        "best_splits_gini": (XT, order, node_of, y, w, counts.sum(1), counts, 1.0),
        "best_splits_newton": (XT, order, node_of, r, h, np.ones(n), node_r, node_h, node_c, 1.0, 1.0),
        "best_split_oblivious": (XT, order, node_of, r, h, node_r, node_h, 1.0),
        "apply_tree": (X, feature.astype(np.int64), rng.normal(size=size) * 0.5, left, right),
    }


def best_of(fn, args, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return min(times)


def fit_times(backend, n, p):
    env = dict(os.environ, ENSEMBLEGUARD_BACKEND=backend)
    out = subprocess.run([sys.executable, "-c", FIT_SCRIPT.format(n=n, p=p)], env=env,
                         capture_output=True, text=True, check=True)
    return [float(v) for v in out.stdout.split()]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=20000)
    ap.add_argument("--p", type=int, default=41)
    ap.add_argument("--nodes", type=int, default=8)
    ap.add_argument("--classes", type=int, default=5)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--skip-fit", action="store_true", help="kernels only")
    args = ap.parse_args(argv)

    inputs = frontier(args.n, args.p, args.nodes, args.classes)
    print(f"n={args.n} p={args.p} nodes={args.nodes} classes={args.classes}")
    print(f"{'kernel':<22}{'numba s':>10}{'numpy s':>10}{'speedup':>9}")
    for name, call in inputs.items():
        fb, fn = getattr(kb, name), getattr(kn, name)
        fb(*call)                                      # compile outside the timing
        tb = best_of(fb, call, args.repeat)
        tn = best_of(fn, call, args.repeat)
        print(f"{name:<22}{tb:>10.4f}{tn:>10.4f}{tn / tb:>8.1f}x")

    if not args.skip_fit:
        n = min(args.n, 5000)
        print(f"\nend-to-end fits, n={n}, 5 trees or rounds (includes numba compile/cache load)")
        nb, nn = fit_times("numba", n, args.p), fit_times("numpy", n, args.p)
        for label, a, b in (("bagging", nb[0], nn[0]), ("gbm", nb[1], nn[1])):
            print(f"{label:<22}{a:>10.3f}{b:>10.3f}{b / a:>8.1f}x")


if __name__ == "__main__":
    main()
