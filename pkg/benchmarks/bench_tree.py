"""Time tree growing and prediction on the compiled and numpy kernel backends.

    python3 benchmarks/bench_tree.py [--rows 5000] [--features 40] [--repeat 3]
"""

import argparse
import time

import numpy as np

from labrisk._kernels import GINI, LEAST_SQUARES, backends
from labrisk.models.tree import presort


def _time(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=5000)
    ap.add_argument("--features", type=int, default=40)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    r = np.random.default_rng(args.seed)
    X = np.ascontiguousarray(r.normal(size=(args.rows, args.features)))
    y = (X[:, 0] - X[:, 1] + r.normal(size=args.rows) > 0).astype(float)
    h = np.ones(args.rows)
    rows = np.arange(args.rows, dtype=np.int64)
    order = presort(X)
    cases = [("gini depth=none mtry=sqrt", GINI, y, -1, int(np.sqrt(args.features))),
             ("least_squares depth=6 all", LEAST_SQUARES, y - y.mean(), 6, 0)]

    mods = backends()
    print(f"rows={args.rows} features={args.features} repeat={args.repeat} "
          f"backends={','.join(sorted(mods))}")
    print(f"{'case':28s} {'backend':8s} {'build_s':>9s} {'apply_s':>9s} {'nodes':>6s}")
    for label, crit, g, depth, mf in cases:
        results = {}
        for name, mod in sorted(mods.items()):
            tb, tree = _time(lambda: mod.build_tree(X, g, h, rows.copy(), order.copy(), crit,
                                                    depth, 2, 1, mf, 7), args.repeat)
            ta, _ = _time(lambda: mod.apply_tree(X, *tree[:4]), args.repeat)
            results[name] = (tb, ta, tree)
            print(f"{label:28s} {name:8s} {tb:9.4f} {ta:9.4f} {len(tree[0]):6d}")
        if len(results) == 2:
            same = all(np.array_equal(a, b) for a, b in
                       zip(results["cython"][2], results["python"][2]))
            speed = results["python"][0] / results["cython"][0]
            print(f"{'':28s} speedup build x{speed:.1f}, identical trees: {same}")


if __name__ == "__main__":
    main()
