"""
Compiled vs numpy spectral sum, S_j = sum_k w_k exp(i omega_k j dt).

    python3 benchmarks/bench_kernels.py [--pairs 3000 30000] [--times 1001 40001] [--repeat 3]

Prints best-of-``repeat`` wall times, the speedup and the maximum deviation
between the two backends for every (pairs, times) combination.
"""

import argparse
import sys
import time

import numpy as np

from twpisf.kernels import HAVE_COMPILED, spectral_sum


def best_time(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.strip().splitlines()[0])
    p.add_argument("--pairs", type=int, nargs="+", default=[3000, 30000])
    p.add_argument("--times", type=int, nargs="+", default=[1001, 10001])
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)
    if not HAVE_COMPILED:
        print("compiled kernel not built; only the numpy backend is available", file=sys.stderr)
        return 1

    rng = np.random.default_rng(args.seed)
    print(f"{'pairs':>8} {'times':>7} {'compiled_s':>11} {'numpy_s':>9} {'speedup':>8} {'max_dev':>9}")
    for n_pairs in args.pairs:
        # frequencies spread like a thermal kick spectrum (rad/ps)
        omega = rng.normal(0.0, 40.0, n_pairs)
        weight = rng.exponential(1.0, n_pairs) * np.exp(2j * np.pi * rng.random(n_pairs))
        weight /= np.sum(np.abs(weight))
        for n_times in args.times:
            dt = 0.005
            tc, sc = best_time(lambda: spectral_sum(omega, weight, dt, n_times, "compiled"), args.repeat)
            tn, sn = best_time(lambda: spectral_sum(omega, weight, dt, n_times, "numpy"), args.repeat)
            dev = float(np.max(np.abs(sc - sn)))
            print(f"{n_pairs:>8} {n_times:>7} {tc:>11.4f} {tn:>9.4f} {tn / tc:>8.1f} {dev:>9.1e}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
