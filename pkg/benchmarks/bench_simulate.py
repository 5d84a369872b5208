"""Wall-clock comparison of the compiled and pure-Python integration kernels.

    python benchmarks/bench_simulate.py [--t-end 20] [--repeat 3]

Runs the five-mass nominal fixture with the tuned resonator switched on halfway and
reports the best time per kernel and the largest state difference between kernels.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from drchain import simulation
from drchain.config import fixture_path, load_config
from drchain.simulation import SimulationConfig, simulate
from drchain.tuning import tune


def bench(kernel: str, cfg, fb, sim: SimulationConfig, repeat: int):
    simulation.use_kernel(kernel)
    best, traj = np.inf, None
    for _ in range(repeat):
        t0 = time.perf_counter()
        traj = simulate(cfg.model, cfg.absorber, fb, sim)
        best = min(best, time.perf_counter() - t0)
    return best, traj


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--t-end", type=float, default=20.0, help="simulated horizon [s]")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    cfg = load_config(fixture_path("five_mass_nominal"))
    fb = tune(cfg.model, cfg.absorber, cfg.excitation).selected
    sim = SimulationConfig(excitation=cfg.excitation, t_end=args.t_end, switch_time=args.t_end / 2)
    kernels = simulation.available_kernels()
    results = {k: bench(k, cfg, fb, sim, args.repeat) for k in kernels}
    steps = next(iter(results.values()))[1].t.size - 1
    print(f"{steps} RK4 steps, best of {args.repeat}")
    for k, (sec, _) in results.items():
        print(f"  {k:9s} {sec * 1e3:9.1f} ms  ({sec / steps * 1e6:.2f} us/step)")
    if len(results) == 2:
        (tc, a), (tp, b) = results["compiled"], results["python"]
        print(f"  speed-up  {tp / tc:9.1f}x")
        print(f"  max |dx|  {np.abs(a.x - b.x).max():.2e} m")
    if "compiled" not in kernels:
        print("  compiled kernel not built; run `pip install -e . --no-build-isolation`")
    simulation.use_kernel(kernels[0])


if __name__ == "__main__":
    main()
