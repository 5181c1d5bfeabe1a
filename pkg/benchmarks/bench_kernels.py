"""Windowed-compare kernel timings: numba vs the pure-numpy fallback.

    python3 benchmarks/bench_kernels.py [--sizes 32 128 512] [--repeat 20]
"""

import argparse
import timeit

import numpy as np

from swarmledger import _kernels


def make_pair(side, seed=0, diff=0.05):
    rng = np.random.default_rng(seed)
    a = rng.choice([0, 1, 2], size=(side, side), p=[0.05, 0.6, 0.35]).astype(np.uint8)
    b = np.where(rng.random(a.shape) < diff, rng.integers(0, 3, size=a.shape), a).astype(np.uint8)
    return a, b


def bench(fn, repeat):
    fn()  # warm-up, includes JIT compilation
    return min(timeit.repeat(fn, number=1, repeat=repeat)) * 1e3


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sizes", type=int, nargs="+", default=[32, 128, 512, 1024])
    parser.add_argument("--window", type=int, default=8)
    parser.add_argument("--repeat", type=int, default=20)
    args = parser.parse_args()
    if not _kernels.HAVE_NUMBA:
        print("numba is not installed; only the numpy path is timed")

    print(f"{'side':>6} {'kernel':<14} {'numpy ms':>10} {'numba ms':>10} {'speedup':>8}")
    for side in args.sizes:
        # a conflict-free pair times the full scan; a conflicting one shows the early exit
        for label, diff in (("scan", 0.0), ("early-exit", 0.5)):
            a, b = make_pair(side, diff=diff)
            n, t, tp = args.window, 0.2, 0.2
            np_ms = bench(lambda: _kernels.any_conflict_numpy(a, b, n, t, tp), args.repeat)
            row = f"{side:>6} {'any/' + label:<14} {np_ms:>10.3f}"
            if _kernels.HAVE_NUMBA:
                nb_ms = bench(lambda: _kernels.any_conflict_numba(a, b, n, t, tp), args.repeat)
                row += f" {nb_ms:>10.3f} {np_ms / nb_ms:>7.1f}x"
            print(row)
        a, b = make_pair(side)
        np_ms = bench(lambda: _kernels.tile_counts_numpy(a, b, args.window), args.repeat)
        row = f"{side:>6} {'tile_counts':<14} {np_ms:>10.3f}"
        if _kernels.HAVE_NUMBA:
            nb_ms = bench(lambda: _kernels.tile_counts_numba(a, b, args.window), args.repeat)
            row += f" {nb_ms:>10.3f} {np_ms / nb_ms:>7.1f}x"
        print(row)


if __name__ == "__main__":
    main()
