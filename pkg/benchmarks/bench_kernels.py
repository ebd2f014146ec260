"""Time the compiled and pure-Python kernels on identical work.

    python benchmarks/bench_kernels.py [--steps 200] [--repeat 5]

Each case advances one random smooth state for a fixed number of adaptive
RK2 steps with both backends, reports the best time per step, and checks
that the two backends end on the same state.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from alarmtaxis import kernels
from alarmtaxis.experiment import random_smooth_field
from alarmtaxis.grid import Grid
from alarmtaxis.integrate import Method, _kernel_args
from alarmtaxis.params import ModelParams
from alarmtaxis.state import StateField

CASES = [("1D n=128", 128), ("1D n=1024", 1024), ("2D 64x64", (64, 64)), ("2D 128x128", (128, 128))]


def _time_backend(name, state, params, grid, steps, repeat):
    kernels.set_backend(name)
    best, final = np.inf, None
    for _ in range(repeat):
        arrays, consts = _kernel_args(state, params, grid)
        t0 = time.perf_counter()
        _, n, status, *_ = kernels.advance(*arrays, *consts, 0.0, np.inf, steps, 0.8, 0.01, 0.0, Method.RK2_SSP.code)
        best = min(best, (time.perf_counter() - t0) / n)
        if status:
            raise RuntimeError(f"{name} backend failed with status {status}")
        final = arrays
    return best, final


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=200)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    backends = kernels.available_backends()
    if "cython" not in backends:
        print("compiled backend not built; only the python backend is available")
    params = ModelParams(b1=0.5, b2=0.4, b3=0.1, xi=0.05, chi=0.05, sigma=2.0)
    previous = kernels.BACKEND
    print(f"{'case':<12} {'backend':<8} {'us/step':>10} {'speedup':>8} {'max diff':>10}")
    try:
        for label, n in CASES:
            grid = Grid(n, 1.0)
            rng = np.random.default_rng(0)
            state = StateField.from_densities(*(random_smooth_field(grid, rng) for _ in range(3)))
            timings, finals = {}, {}
            for name in backends:
                timings[name], finals[name] = _time_backend(name, state, params, grid, args.steps, args.repeat)
            ref = timings.get("python")
            for name in backends:
                diff = max(float(np.max(np.abs(a - b))) for a, b in zip(finals[name], finals[backends[0]]))
                speed = f"{ref / timings[name]:.1f}x" if ref else "-"
                print(f"{label:<12} {name:<8} {timings[name] * 1e6:>10.1f} {speed:>8} {diff:>10.1e}")
    finally:
        kernels.set_backend(previous)


if __name__ == "__main__":
    main()
