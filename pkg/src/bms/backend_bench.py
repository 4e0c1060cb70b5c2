"""Timing comparison of the compiled and interpreted kernel backends.

The backend is chosen by the BMS_BACKEND environment variable at import
time, so the comparison spawns one child interpreter per backend, runs
the same fixed workload in each, and reports the wall times side by side.

Run as a module:  python -m bms.backend_bench  [--repeats R]
"""

import argparse
import json
import os
import subprocess
import sys
import time

WORKLOAD_SEED = 2024


def run_workload():
    """Fixed kernel-heavy workload; returns seconds per stage."""
    import numpy as np

    from . import bench, kernels
    from .deterministic import MheWeights, solve_lsmhe_window, solve_pwmhe
    from .model import make_window
    from .solvers import seeded_rng

    cfg = bench.ScenarioConfig(kind="hydraulic", estimator="lsmhe", trials=1)
    parts = bench._hydraulic_parts(cfg)
    sys_h = parts["sys"]
    rng = seeded_rng(WORKLOAD_SEED)
    truth, labels, xbar0 = parts["trial"](rng)
    weights = MheWeights(1e6 * np.eye(3), 1e-8 * np.eye(3), (1e6,))
    N = 5

    def windows():
        for t in range(N, 200):
            ins = parts["inputs"][t - N : t]
            outs = labels[t - N : t + 1]
            yield make_window(ins, outs, truth[t - N] + 0.1)

    # warm-up pass compiles everything once under the numba backend
    for w in list(windows())[:2]:
        solve_lsmhe_window(sys_h, parts["sensors"], weights, w)
        solve_pwmhe(sys_h, parts["sensors"], weights, w)
    kernels.log_tail_grid(np.linspace(-8.0, 8.0, 16))

    out = {}
    tic = time.perf_counter()
    for w in windows():
        solve_lsmhe_window(sys_h, parts["sensors"], weights, w)
    out["lsmhe"] = time.perf_counter() - tic

    tic = time.perf_counter()
    for w in windows():
        solve_pwmhe(sys_h, parts["sensors"], weights, w)
    out["pwmhe"] = time.perf_counter() - tic

    grid = np.linspace(-8.0, 8.0, 200_000)
    tic = time.perf_counter()
    kernels.log_tail_grid(grid)
    out["log_tail"] = time.perf_counter() - tic

    tic = time.perf_counter()
    bench._delta_of_labels(sys_h, parts["sensors"], labels[:200], N)
    out["delta"] = time.perf_counter() - tic
    return out


def compare(repeats=1):
    """Run the workload under both backends in child interpreters."""
    results = {}
    for backend in ("numba", "numpy"):
        best = None
        for _ in range(repeats):
            env = dict(os.environ, BMS_BACKEND=backend)
            proc = subprocess.run(
                [sys.executable, "-m", "bms.backend_bench", "--child"],
                env=env,
                capture_output=True,
                text=True,
                check=True,
            )
            stage = json.loads(proc.stdout.strip().splitlines()[-1])
            if best is None:
                best = stage
            else:
                best = {k: min(best[k], stage[k]) for k in stage}
        results[backend] = best
    return results


def main(argv=None):
    parser = argparse.ArgumentParser(prog="bms.backend_bench")
    parser.add_argument("--child", action="store_true")
    parser.add_argument("--repeats", type=int, default=1)
    args = parser.parse_args(argv)
    if args.child:
        print(json.dumps(run_workload()))
        return 0
    results = compare(args.repeats)
    stages = sorted(results["numba"])
    width = max(len(s) for s in stages)
    print(f"{'stage'.ljust(width)}  {'numba':>10}  {'numpy':>10}  {'ratio':>8}")
    for s in stages:
        a, b = results["numba"][s], results["numpy"][s]
        ratio = b / a if a > 0 else float("inf")
        print(f"{s.ljust(width)}  {a:10.4f}  {b:10.4f}  {ratio:8.2f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
