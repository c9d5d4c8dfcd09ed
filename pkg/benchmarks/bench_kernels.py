"""Benchmark the hot kernels: numba-compiled vs pure-Python fallback.

Runs a few representative workloads (first-passage chains, grid-sampled
pair chains, strip exits, environment particle walks) and reports wall
time and throughput.  With --compare the script re-runs itself in a
subprocess with STICKYFLOW_NO_NUMBA=1 at a reduced scale and prints both
columns side by side.

Usage:
    python benchmarks/bench_kernels.py [--scale N] [--compare]
"""

from __future__ import annotations

import argparse
import json
import math
import os
import subprocess
import sys
import time

import numpy as np

from stickyflow import kernels
from stickyflow._jit import NUMBA_ENABLED
from stickyflow.chain import split_cumulative, sticky_pair_family
from stickyflow.params import AtomicMeasure, p_n_from_theta, theta_from_nu


def bench_first_passage(scale: int) -> dict:
    theta = theta_from_nu(AtomicMeasure.delta(0.5), 0.0, 3)
    cum = split_cumulative(p_n_from_theta(theta, 10_000), 3)
    replicas = 40 * scale
    x0 = np.zeros(3, dtype=np.int64)
    t = np.empty(replicas)
    off = np.empty(replicas)
    states = np.empty((replicas, 3), dtype=np.int64)
    events = np.empty(replicas, dtype=np.int64)
    capped = np.empty(replicas, dtype=np.bool_)
    t0 = time.perf_counter()
    kernels.batch_until_gap(np.uint64(1), 0, replicas, x0, cum, np.int64(10),
                            10**9, t, off, states, events, capped)
    dt = time.perf_counter() - t0
    total = int(events.sum())
    return {"name": "first-passage chain (N=3)", "seconds": dt,
            "events": total, "rate": total / dt}


def bench_pair_grid(scale: int) -> dict:
    cum = split_cumulative(p_n_from_theta(sticky_pair_family(1.0), 10_000), 2)
    replicas = 8 * scale
    horizon = 2000.0
    grid = np.array([horizon])
    x0 = np.zeros(2, dtype=np.int64)
    states = np.empty((replicas, 1, 2), dtype=np.int64)
    occ = np.empty((replicas, 1, 1))
    capped = np.empty(replicas, dtype=np.bool_)
    t0 = time.perf_counter()
    kernels.batch_grid(np.uint64(2), 0, replicas, x0, cum, grid, 10**9,
                       states, occ, capped)
    dt = time.perf_counter() - t0
    total = int(replicas * horizon * 1.8)  # mean event rate between 1 and 2
    return {"name": "sticky pair to horizon", "seconds": dt,
            "events": total, "rate": total / dt}


def bench_strip_exit(scale: int) -> dict:
    p11 = (1.0 / (2.0 * math.sqrt(2.0))) / math.sqrt(10_000)
    replicas = 30 * scale
    w = np.empty(replicas, dtype=np.int64)
    gap = np.empty(replicas, dtype=np.int64)
    flag = np.empty(replicas, dtype=np.bool_)
    capped = np.empty(replicas, dtype=np.bool_)
    t0 = time.perf_counter()
    kernels.batch_strip_exit(np.uint64(3), 0, replicas, np.int64(25),
                             np.int64(0), p11, np.int64(50), 10**9,
                             w, gap, flag, capped)
    dt = time.perf_counter() - t0
    return {"name": "half-plane strip exit", "seconds": dt,
            "events": None, "rate": replicas / dt}


def bench_particles(scale: int) -> dict:
    mu = AtomicMeasure.from_pairs([(0.25, 1 / 3), (0.75, 2 / 3)])
    replicas = 300 * scale
    x0 = np.zeros(2, dtype=np.int64)
    out = np.empty((replicas, 2), dtype=np.int64)
    t0 = time.perf_counter()
    kernels.batch_particles_endstate(np.uint64(4), 0, replicas, x0, 5.0,
                                     mu.xs, mu.cumulative_weights(), out)
    dt = time.perf_counter() - t0
    return {"name": "two particles in environment", "seconds": dt,
            "events": None, "rate": replicas / dt}


BENCHES = [bench_first_passage, bench_pair_grid, bench_strip_exit,
           bench_particles]


def run_all(scale: int) -> list[dict]:
    for bench in BENCHES:  # warm-up triggers compilation outside the timing
        bench(1)
    return [bench(scale) for bench in BENCHES]


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--scale", type=int, default=None,
                        help="workload multiplier (default 50 jit, 1 fallback)")
    parser.add_argument("--compare", action="store_true",
                        help="also run the pure-Python fallback and compare")
    parser.add_argument("--emit-json", action="store_true")
    args = parser.parse_args()

    scale = args.scale
    if scale is None:
        scale = 50 if NUMBA_ENABLED else 1
    rows = run_all(scale)
    if args.emit_json:
        print(json.dumps(rows))
        return 0

    mode = "numba" if NUMBA_ENABLED else "python fallback"
    print(f"mode: {mode}, scale: {scale}")
    for r in rows:
        unit = "events/s" if r["events"] else "replicas/s"
        print(f"  {r['name']:<32} {r['seconds']:>8.3f}s  {r['rate']:>12.0f} {unit}")

    if args.compare and NUMBA_ENABLED:
        env = dict(os.environ, STICKYFLOW_NO_NUMBA="1")
        proc = subprocess.run(
            [sys.executable, __file__, "--scale", "1", "--emit-json"],
            capture_output=True, text=True, env=env, check=True,
        )
        fallback = json.loads(proc.stdout)
        jit_small = run_all(1)
        print("\nnumba vs fallback (scale 1):")
        for a, b in zip(jit_small, fallback):
            speedup = b["seconds"] / a["seconds"]
            print(f"  {a['name']:<32} numba {a['seconds']:>8.3f}s   "
                  f"python {b['seconds']:>8.3f}s   speedup {speedup:>6.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
