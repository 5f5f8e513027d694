"""Compare the compiled and pure-NumPy tree kernels.

    python benchmarks/bench_tree_kernels.py [--rows 500 3500 20000] [--features 8] [--depth 7]

Both backends are timed on the same binned data; the grown trees are checked
for exact equality before timings are reported.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from latentforest.trees import Binner
from latentforest.trees import _kernels, _pykernels


def _best_of(fn, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def bench(rows: int, features: int, depth: int, repeat: int, seed: int = 0) -> dict:
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(rows, features))
    y = np.sin(X[:, 0]) + X[:, 1] * X[:, -1] + 0.1 * rng.normal(size=rows)
    binner = Binner().fit(X)
    Xb = binner.transform(X)
    n_bins = np.asarray(binner.n_bins, dtype=np.int32)
    g = np.ascontiguousarray(y)
    h = np.ones(rows)
    idx = np.arange(rows, dtype=np.int64)
    args = (Xb, g, h, idx, n_bins, depth, 2, 1, 1.0, features, 0, 1e-12)

    t_c, tree_c = _best_of(lambda: _kernels.build_tree(*args), repeat)
    t_py, tree_py = _best_of(lambda: _pykernels.build_tree(*args), max(1, repeat // 3))
    if not all(np.array_equal(a, b) for a, b in zip(tree_c, tree_py)):
        raise AssertionError("backends grew different trees")

    feature, split_bin, left, right, value, _ = tree_c
    thr = np.array([binner.threshold(f, b) if f >= 0 else 0.0
                    for f, b in zip(feature, split_bin)])
    roots = np.zeros(1, dtype=np.int64)
    pargs = (np.ascontiguousarray(X), feature, thr, left, right, value, roots, False)
    p_c, out_c = _best_of(lambda: _kernels.predict_ensemble(*pargs), repeat)
    p_py, out_py = _best_of(lambda: _pykernels.predict_ensemble(*pargs), repeat)
    if not np.array_equal(out_c, out_py):
        raise AssertionError("backends predicted differently")
    return {"rows": rows, "nodes": int(feature.size), "build_c": t_c, "build_py": t_py,
            "predict_c": p_c, "predict_py": p_py}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, nargs="+", default=[500, 3500, 20000])
    ap.add_argument("--features", type=int, default=8)
    ap.add_argument("--depth", type=int, default=7)
    ap.add_argument("--repeat", type=int, default=9)
    args = ap.parse_args(argv)
    print(f"{'rows':>7} {'nodes':>6} {'build C ms':>11} {'build py ms':>12} {'x':>6} "
          f"{'pred C ms':>10} {'pred py ms':>11} {'x':>6}")
    for n in args.rows:
        r = bench(n, args.features, args.depth, args.repeat)
        print(f"{r['rows']:>7} {r['nodes']:>6} {r['build_c'] * 1e3:>11.3f} "
              f"{r['build_py'] * 1e3:>12.3f} {r['build_py'] / r['build_c']:>6.1f} "
              f"{r['predict_c'] * 1e3:>10.3f} {r['predict_py'] * 1e3:>11.3f} "
              f"{r['predict_py'] / r['predict_c']:>6.1f}")


if __name__ == "__main__":
    main()
