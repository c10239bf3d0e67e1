#!/usr/bin/env python3
"""Throughput comparison of the compiled and pure-python kernels.

Times the two hot loops (mean-field Euler-Maruyama stepping and the
agent tick loop) on identical workloads and random streams, checks that
both backends agree bit for bit, and prints steps/s plus the speedup.

    python benchmarks/bench_kernels.py [--steps N] [--agents N] [--ticks N]
"""

import argparse
import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from cdmsim import _kernels_py, rng  # noqa: E402

try:
    from cdmsim import _kernels
except ImportError:
    _kernels = None

RATES = (0.12, 0.08, 0.2, 0.15, 0.02, 0.02, 0.05, 0.05)
SIGMAS = (0.1, 0.1, 0.08, 0.08, 0.03, 0.03, 0.03, 0.03)


def time_mean_field(mod, steps, repeats=3):
    best = float("inf")
    out = None
    for _ in range(repeats):
        bitgen = rng.bit_generator(rng.KIND_TRIAL, 1, 0)
        start = time.perf_counter()
        out = mod.run_mean_field(
            bitgen, 0.0, 0.0, 100.0, 1.0, RATES, SIGMAS, 1, np.empty(0),
            0.3, 4.0, 0.01, steps, False, np.empty(0), 0, False)
        best = min(best, time.perf_counter() - start)
    return best, out


def time_agents(mod, n_agents, ticks, repeats=3):
    best = float("inf")
    out = None
    for _ in range(repeats):
        bitgen = rng.bit_generator(rng.KIND_REPLICATE, 1, 0)
        start = time.perf_counter()
        out = mod.run_agents(
            bitgen, n_agents, RATES, 1.0, 0.9, 0.3, 8.0, 0.05, ticks,
            True, np.empty(0), 0, False)
        best = min(best, time.perf_counter() - start)
    return best, out


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--steps", type=int, default=200_000,
                        help="mean-field integration steps (default 200000)")
    parser.add_argument("--agents", type=int, default=400,
                        help="agents per world (default 400)")
    parser.add_argument("--ticks", type=int, default=5_000,
                        help="agent world ticks (default 5000)")
    args = parser.parse_args()

    print(f"mean-field kernel, {args.steps} steps:")
    t_py, out_py = time_mean_field(_kernels_py, args.steps)
    print(f"  python   {args.steps / t_py / 1e6:7.2f} M steps/s  ({t_py * 1e3:8.1f} ms)")
    if _kernels is not None:
        t_cy, out_cy = time_mean_field(_kernels, args.steps)
        print(f"  compiled {args.steps / t_cy / 1e6:7.2f} M steps/s  ({t_cy * 1e3:8.1f} ms)")
        print(f"  speedup  {t_py / t_cy:.1f}x")

    print(f"agent kernel, {args.agents} agents x {args.ticks} ticks:")
    t_py, a_py = time_agents(_kernels_py, args.agents, args.ticks)
    rate = args.ticks * args.agents / t_py / 1e6
    print(f"  python   {rate:7.2f} M agent-ticks/s  ({t_py * 1e3:8.1f} ms)")
    if _kernels is not None:
        t_cy, a_cy = time_agents(_kernels, args.agents, args.ticks)
        rate = args.ticks * args.agents / t_cy / 1e6
        print(f"  compiled {rate:7.2f} M agent-ticks/s  ({t_cy * 1e3:8.1f} ms)")
        print(f"  speedup  {t_py / t_cy:.1f}x")
        same = np.array_equal(a_py[0], a_cy[0]) and np.array_equal(a_py[1], a_cy[1])
        print(f"backends bit-identical: {same}")
    else:
        print("compiled kernels not built; run: python setup.py build_ext --inplace")


if __name__ == "__main__":
    main()
