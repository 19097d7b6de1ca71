"""Time the compiled kernels against the NumPy fallback.

Usage::

    python3 benchmarks/bench_kernels.py [--n 64 128] [--repeat 5] [--steps 50]

Prints one line per kernel and grid size with the best-of-``repeat`` time
of each backend and the speedup, then the cost of a full coupled step.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from mvsim import _kernels_py
from mvsim.grid import Grid
from mvsim.scenario import Scenario, bump_F, twist_M, vortex_velocity
from mvsim.solver import CoupledSolver

try:
    from mvsim import _kernels as _kernels_cy
except ImportError:  # pragma: no cover
    _kernels_cy = None


def _inputs(n: int):
    g = Grid.from_extent(n, n)
    v = vortex_velocity(g, 0.05)
    F = np.ascontiguousarray(bump_F(g, 0.1, "all"))
    M = np.ascontiguousarray(twist_M(g, 0.5, 0.3))
    uc = np.ascontiguousarray(0.5 * (v.u[1:] + v.u[:-1]))
    wc = np.ascontiguousarray(0.5 * (v.w[:, 1:] + v.w[:, :-1]))
    H = np.zeros((3, n, n))
    return g, v, F, M, uc, wc, H


def kernel_cases(n: int):
    g, v, F, M, uc, wc, H = _inputs(n)
    hx, hy = g.hx, g.hy
    u, w = np.ascontiguousarray(v.u), np.ascontiguousarray(v.w)
    return {
        "lap_cell": lambda k: k.lap_cell(M[0], hx, hy, 1),
        "lap_xface": lambda k: k.lap_xface(u, hx, hy),
        "llg_rhs": lambda k: k.llg_rhs(M, uc, wc, H, hx, hy),
        "transport_F": lambda k: k.transport_F(F, u, w, hx, hy),
        "magnetic_div": lambda k: k.magnetic_div(M, hx, hy),
        "advect_mac": lambda k: k.advect_mac(u, w, u, w, hx, hy),
        "diag_sums": lambda k: k.diag_sums(u, w, F, M, None, hx, hy),
        "renormalize": lambda k: k.renormalize(M.copy(), 1e-8),
    }


def best_time(fn, repeat: int) -> float:
    number = 1
    while timeit.timeit(fn, number=number) < 0.05:
        number *= 2
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def bench_step(n: int, kernels, steps: int) -> float:
    sc = Scenario(nx=n, ny=n, dt=0.7 / (4 * n * n), T=steps * 0.7 / (4 * n * n), v0="vortex",
                  v0_amp=0.03, F0="bump", F0_amp=0.1, M0="twist", M0_amp=0.5, M0_tilt=0.3,
                  cfl_safety=0.7)
    solver = CoupledSolver(sc, kernels=kernels)
    state = solver.initial_state()
    solver.step(state)  # warm caches
    t = timeit.timeit(lambda: solver.run(state=state, n_steps=steps), number=1)
    return t / steps


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", nargs="+", type=int, default=[64, 128])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--steps", type=int, default=50)
    args = ap.parse_args(argv)
    if _kernels_cy is None:
        print("compiled kernels not built; only the fallback is timed")
    print(f"{'kernel':14s} {'n':>5s} {'python [us]':>12s} {'cython [us]':>12s} {'speedup':>8s}")
    for n in args.n:
        for name, fn in kernel_cases(n).items():
            tp = best_time(lambda: fn(_kernels_py), args.repeat)
            if _kernels_cy is None:
                print(f"{name:14s} {n:5d} {tp * 1e6:12.1f}")
                continue
            tc = best_time(lambda: fn(_kernels_cy), args.repeat)
            print(f"{name:14s} {n:5d} {tp * 1e6:12.1f} {tc * 1e6:12.1f} {tp / tc:8.1f}")
    for n in args.n:
        tp = bench_step(n, _kernels_py, args.steps)
        line = f"{'full step':14s} {n:5d} {tp * 1e6:12.1f}"
        if _kernels_cy is not None:
            tc = bench_step(n, _kernels_cy, args.steps)
            line += f" {tc * 1e6:12.1f} {tp / tc:8.1f}"
        print(line)


if __name__ == "__main__":
    main()
