"""Compare the compiled and pure-Python exact RIP enumeration backends.

Usage::

    python benchmarks/bench_rip.py [--repeat 3] [--seed 0]

Each case enumerates every support of a seeded Rademacher partial circulant
and reports the best-of-``repeat`` wall time for both backends, the speedup
and the largest disagreement between the two constants.
"""

from __future__ import annotations

import argparse
import math
import time

import numpy as np

from circsense import operators as ops
from circsense import rip

CASES = [(16, 8, 2), (20, 10, 3), (24, 12, 4), (24, 12, 6), (28, 14, 5), (32, 16, 3)]


def best_time(fn, repeat):
    best = math.inf
    result = None
    for _ in range(repeat):
        start = time.perf_counter()
        result = fn()
        best = min(best, time.perf_counter() - start)
    return best, result


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    if not rip.extension_available():
        print("compiled kernel not built; only the Python backend is available")
        return 1
    print(f"{'n':>4} {'m':>4} {'s':>3} {'supports':>10} {'python [s]':>11} {'extension [s]':>14} {'speedup':>8} {'|diff|':>9}")
    for n, m, s in CASES:
        rng = np.random.default_rng([args.seed, n, m, s])
        phi = ops.partial_operator("circulant", ops.GeneratorSpec("rademacher"), n, m, "multiset", rng)
        t_py, r_py = best_time(lambda: rip.exact_rip_constant(phi, s, backend="python"), args.repeat)
        t_ext, r_ext = best_time(lambda: rip.exact_rip_constant(phi, s, backend="extension"), args.repeat)
        print(
            f"{n:>4} {m:>4} {s:>3} {math.comb(n, s):>10} {t_py:>11.4f} {t_ext:>14.4f} "
            f"{t_py / t_ext:>8.2f} {abs(r_py.delta - r_ext.delta):>9.1e}"
        )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
