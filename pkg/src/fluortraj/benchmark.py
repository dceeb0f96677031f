"""Benchmark the numba-compiled kernels against the pure-NumPy fallback lane.

Runs the same homodyne and photodetection trajectory workloads in two
subprocesses (one with FLUORTRAJ_NO_NUMBA=1) and reports steps/second.
Usage: python -m fluortraj.benchmark [--n 64] [--steps 2000]
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import time

_WORKLOAD = """
import json, sys, time
import numpy as np
import fluortraj as ft

n, steps = {n}, {steps}
cfg_h = ft.MeasurementConfig("homodyne", 0.0, np.pi / 2, 1.0, 1e-3)
cfg_p = ft.MeasurementConfig("photodetection", 0.0, 0.0, 1.0, 1e-3)
ee = ft.PureTwoQubitState(np.array([1, 0, 0, 0], dtype=complex))
results = {{"numba": ft.USE_NUMBA}}

# warmup triggers compilation in the numba lane; excluded from timing
for cfg in (cfg_h, cfg_p):
    ft.run_trajectory(ee, cfg, 5 * cfg.dt, seed=1, snapshot_stride=0)

for name, cfg in (("homodyne", cfg_h), ("photodetection", cfg_p)):
    t0 = time.perf_counter()
    for i in range(n):
        ft.run_trajectory(ee, cfg, steps * cfg.dt,
                          seed=ft.derive_stream_key(42, i), snapshot_stride=0)
    results[name + "_sec"] = time.perf_counter() - t0
print(json.dumps(results))
"""


def _run_lane(n: int, steps: int, disable_numba: bool) -> dict:
    env = dict(os.environ)
    if disable_numba:
        env["FLUORTRAJ_NO_NUMBA"] = "1"
    else:
        env.pop("FLUORTRAJ_NO_NUMBA", None)
    proc = subprocess.run(
        [sys.executable, "-c", _WORKLOAD.format(n=n, steps=steps)],
        env=env, capture_output=True, text=True, check=True,
    )
    return json.loads(proc.stdout.strip().splitlines()[-1])


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=64, help="trajectories per workload")
    ap.add_argument("--steps", type=int, default=2000, help="steps per trajectory")
    args = ap.parse_args(argv)

    total_steps = args.n * args.steps
    print(f"workload: {args.n} trajectories x {args.steps} steps")
    lanes = {}
    for label, disable in (("numba", False), ("numpy-fallback", True)):
        t0 = time.perf_counter()
        res = _run_lane(args.n, args.steps, disable)
        wall = time.perf_counter() - t0
        lanes[label] = res
        print(f"\n[{label}] (subprocess wall {wall:.1f} s, numba active: {res['numba']})")
        for name in ("homodyne", "photodetection"):
            sec = res[name + "_sec"]
            print(f"  {name:<15} {sec:8.3f} s   {total_steps / sec:12.0f} steps/s")
    for name in ("homodyne", "photodetection"):
        speedup = lanes["numpy-fallback"][name + "_sec"] / lanes["numba"][name + "_sec"]
        print(f"\n{name}: numba speedup x{speedup:.1f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
