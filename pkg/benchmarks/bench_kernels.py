"""Compare the compiled kernels with the numpy fallback.

Usage::

    python benchmarks/bench_kernels.py [--repeat 20] [--json out.json]

Times each kernel on representative sizes with both backends and, as an
end-to-end figure, one noise path plus fine-scale trajectory of the p = 4 preset
(each backend in a fresh interpreter, selected through SIGMAHOM_PURE_PYTHON).
"""

import argparse
import json
import os
import subprocess
import sys
import timeit

import numpy as np

from sigmahom import _kernels_py

try:
    from sigmahom import _kernels_ext
except ImportError:  # extension not built
    _kernels_ext = None

TRAJECTORY = """
import time
from sigmahom import cli, harness as H, kernels
from sigmahom.config import parse_config
from sigmahom.noise import sample_noise_path
from sigmahom.solver import FineProvider, solve_trajectory
cfg = parse_config(cli.preset_path("plaw4"))
grid, model = H.make_grid(cfg), cfg.model()
u0 = H.make_u0(cfg, grid)
best = float("inf")
for seed in range(3):
    t = time.perf_counter()
    path = sample_noise_path(1000 + seed, grid.T, grid.M, 8)
    solve_trajectory(grid, FineProvider(model, 0.25), path, u0)
    best = min(best, time.perf_counter() - t)
print(kernels.BACKEND, best)
"""


def _cases(rng):
    n = 4096
    ctr = rng.integers(0, 2 ** 32, size=(n, 4), dtype=np.uint64).astype(np.uint32)
    m = 128
    lower, upper = rng.random(m), rng.random(m)  # lower[0], upper[-1] unused
    diag = 4.0 + rng.random(m)
    rhs = rng.random(m)
    coef, lam = 1.0 + rng.random(m), rng.normal(size=m)
    return {
        "philox4x32 (4096 blocks)": lambda mod: mod.philox4x32(ctr, 12345, 678),
        "tridiag_solve (n=128)": lambda mod: mod.tridiag_solve(lower, diag, upper, rhs),
        "power_flux_1d (n=128, p=3)": lambda mod: mod.power_flux_1d(coef, lam, 3.0, 1e-8),
    }


def kernel_timings(repeat: int) -> list:
    rng = np.random.default_rng(0)
    rows = []
    backends = [("python", _kernels_py)] + ([("cython", _kernels_ext)] if _kernels_ext else [])
    for name, fn in _cases(rng).items():
        row = {"kernel": name}
        for label, mod in backends:
            timer = timeit.Timer(lambda: fn(mod))
            number, _ = timer.autorange()
            row[label] = min(timer.repeat(repeat=repeat, number=number)) / number
        if "cython" in row:
            row["speedup"] = row["python"] / row["cython"]
        rows.append(row)
    return rows


def trajectory_timings() -> dict:
    out = {}
    for pure in ("1", "0"):
        env = dict(os.environ, SIGMAHOM_PURE_PYTHON=pure)
        res = subprocess.run([sys.executable, "-c", TRAJECTORY], env=env, capture_output=True, text=True,
                             check=True)
        backend, seconds = res.stdout.split()
        out[backend] = float(seconds)
    return out


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=20)
    parser.add_argument("--json", help="write the timings to this file")
    parser.add_argument("--skip-trajectory", action="store_true")
    args = parser.parse_args(argv)
    rows = kernel_timings(args.repeat)
    print(f"{'kernel':32s} {'python [us]':>12s} {'cython [us]':>12s} {'speedup':>8s}")
    for r in rows:
        cy = f"{1e6 * r['cython']:12.2f}" if "cython" in r else f"{'n/a':>12s}"
        sp = f"{r['speedup']:8.1f}" if "speedup" in r else f"{'':>8s}"
        print(f"{r['kernel']:32s} {1e6 * r['python']:12.2f} {cy} {sp}")
    result = {"kernels": rows}
    if not args.skip_trajectory:
        traj = trajectory_timings()
        result["trajectory_s"] = traj
        print("p = 4 trajectory (eps = 1/4, 200 steps, best of 3): "
              + ", ".join(f"{k} {v:.2f} s" for k, v in traj.items()))
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(result, fh, indent=2)
    return result


if __name__ == "__main__":
    main()
