#!/usr/bin/env python3
"""Benchmark the compiled triad kernel against the NumPy fallback.

The scatter-add over resonant triads dominates every quadratic-form
application inside the envelope stepper and the Monte Carlo sweeps, so it
is the piece worth compiling.  Run after `pip install -e .` (which builds
the extension when Cython is present):

    python benchmarks/bench_kernels.py [N ...]
"""

import sys
import time

import numpy as np

from rotwind import _kernels
from rotwind._kernels._triad_np import triad_accumulate_np
from rotwind.geometry import TorusGeometry, random_real_field
from rotwind.resonance import build_triad_table


def bench_one(N: int, repeats: int = 200):
    geom = TorusGeometry(1.0, 1.0, 1.0)
    table = build_triad_table(geom, N)
    rng = np.random.default_rng(0)
    w = random_real_field(geom, N, rng)
    n_out = len(table.mode_set_out)
    args = (table.alpha, table.ki, table.li, table.mi, w.data, w.data)

    out_active = np.zeros(n_out, dtype=complex)
    _kernels.triad_accumulate(out_active, *args)
    out_np = np.zeros(n_out, dtype=complex)
    triad_accumulate_np(out_np, *args)
    assert np.allclose(out_active, out_np, atol=1e-12), "backends disagree"

    def time_it(fn):
        best = np.inf
        for _ in range(5):
            t0 = time.perf_counter()
            for _ in range(repeats):
                out = np.zeros(n_out, dtype=complex)
                fn(out, *args)
            best = min(best, (time.perf_counter() - t0) / repeats)
        return best

    t_active = time_it(_kernels.triad_accumulate)
    t_np = time_it(triad_accumulate_np)
    return len(table), t_active, t_np


def main(argv):
    sizes = [int(a) for a in argv[1:]] or [2, 3, 4]
    print(f"active backend: {_kernels.backend()}")
    print(f"{'N':>3} {'triads':>8} {'active (us)':>12} {'numpy (us)':>12} {'speedup':>8}")
    for N in sizes:
        n_triads, t_a, t_n = bench_one(N, repeats=max(20, 2000 // (N**3)))
        print(
            f"{N:>3} {n_triads:>8} {t_a * 1e6:>12.1f} {t_n * 1e6:>12.1f} "
            f"{t_n / t_a:>8.2f}"
        )
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv))
