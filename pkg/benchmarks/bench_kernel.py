"""Time the compiled and numpy kernel backends on the same batch.

    python3 benchmarks/bench_kernel.py [--queries 20000] [--repeat 3]
"""
import argparse
import time

import numpy as np

from grushinlab import _kernel_py
from grushinlab.kernel import QuadratureSpec, quadrature_rule

try:
    from grushinlab import _kernel_core
except ImportError:
    _kernel_core = None


def batch(n, t=0.5, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.uniform(-2, 2, n)
    x0 = rng.uniform(-2, 2, n)
    y = rng.uniform(-1, 1, n)
    a, b = x * x + x0 * x0, x * x0
    nodes, weights = quadrature_rule(QuadratureSpec(), t, float(np.abs(y).max()), 1, float(a.min()))
    return a, b, y, np.full(n, t), nodes, weights


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--queries", type=int, default=20000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    a, b, y, t, nodes, weights = batch(args.queries)
    print(f"{args.queries} queries x {nodes.size} nodes")
    t_py, ref = best_of(lambda: _kernel_py.grushin_sum(a, b, y, t, 1, nodes, weights), args.repeat)
    print(f"python    {t_py:8.3f} s")
    if _kernel_core is None:
        print("compiled  not built")
        return
    t_c, out = best_of(lambda: _kernel_core.grushin_sum(a, b, y, t, 1, nodes, weights), args.repeat)
    scale = np.abs(ref).max()
    print(f"compiled  {t_c:8.3f} s   speed-up {t_py / t_c:5.1f}x   "
          f"max rel diff {np.abs(out - ref).max() / scale:.2e}")


if __name__ == "__main__":
    main()
