"""Benchmark: compiled vs pure-Python pair-interaction engine.

Times the two hot paths (neighborhood field queries and full Metropolis
sweeps) at a realistic density, for every available backend.

    python3 benchmarks/bench_engine.py [--gamma 0.25] [--box 32] [--rho 3.8]
"""

import argparse
import time

import numpy as np

from pottsgas import _core
from pottsgas.geometry import Box
from pottsgas.kernels import KacKernel, pair_potential_table
from pottsgas.simulator import gcmc_sweep, make_state, sample_restricted_config


def available_backends():
    out = ["python"]
    if _core.engine_cy is not None:
        out.append("cython")
    return out


def bench_field_queries(backend, kern, tab, sides, n_particles, n_queries):
    rng = np.random.default_rng(0)
    eng = _core.get_engine(backend)(sides, True, 3, tab.rmax, tab.h,
                                    tab.coeffs, None, None)
    for _ in range(n_particles):
        eng.insert(rng.random(2) * sides[0], int(rng.integers(3)) + 1)
    pts = rng.random((n_queries, 2)) * sides[0]
    t0 = time.perf_counter()
    for p in pts:
        eng.field_at(p)
    dt = time.perf_counter() - t0
    return n_queries / dt


def bench_sweeps(backend, kern, sides, rho, n_sweeps):
    box = Box(sides, periodic=True)
    rng = np.random.default_rng(1)
    init = sample_restricted_config(box, np.full(3, rho / 3), rng, 3)
    state = make_state(box, 3, 1.0, 1.5, kern, seed=7, backend=backend,
                       init=init)
    moves = 0
    t0 = time.perf_counter()
    for _ in range(n_sweeps):
        gcmc_sweep(state)
        moves += max(state.n, 16)
    dt = time.perf_counter() - t0
    return moves / dt


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--gamma", type=float, default=0.25)
    ap.add_argument("--box", type=float, default=32.0)
    ap.add_argument("--rho", type=float, default=3.8)
    ap.add_argument("--queries", type=int, default=2000)
    ap.add_argument("--sweeps", type=int, default=5)
    args = ap.parse_args()

    kern = KacKernel(gamma=args.gamma, d=2)
    tab = pair_potential_table(kern)
    sides = (args.box, args.box)
    n_particles = int(args.rho * args.box ** 2)

    print(f"gamma={args.gamma} box={args.box} n~{n_particles} "
          f"(pair range {kern.pair_range})")
    print(f"{'backend':<8} {'field queries/s':>16} {'moves/s':>12}")
    rates = {}
    for backend in available_backends():
        q = bench_field_queries(backend, kern, tab, sides, n_particles,
                                args.queries)
        m = bench_sweeps(backend, kern, sides, args.rho, args.sweeps)
        rates[backend] = (q, m)
        print(f"{backend:<8} {q:>16.0f} {m:>12.0f}")
    if "cython" in rates:
        print(f"speedup: field x{rates['cython'][0] / rates['python'][0]:.1f}"
              f", sweeps x{rates['cython'][1] / rates['python'][1]:.1f}")


if __name__ == "__main__":
    main()
