"""Compare the numba kernels with the NumPy fallback.

Kernel timings use patch maps of one step of example 3 at ``h = 1/32``;
``--steps`` additionally times a short simulation under each backend in a
fresh process (``SBDFCUT_BACKEND`` is read at import time).

    python benchmarks/bench_kernels.py [--repeat 5] [--steps 6]
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from sbdfcut.flowmaps import _candidates, build_patch_map
from sbdfcut.geometry import build_geometry
from sbdfcut.grid import GridSpec, classify
from sbdfcut.kernels import _numba, _numpy
from sbdfcut.problems import example
from sbdfcut.tracking import initial_curve

SIM = """
import time
from sbdfcut.harness import make_params
from sbdfcut.kernels import BACKEND
from sbdfcut.problems import example
from sbdfcut.sbdf import Simulation
p = example(3)
sim = Simulation(p, make_params(p, 3, 1 / 32))
sim.startup()
sim.advance()  # compile outside the timed region
t = time.perf_counter()
for _ in range({steps}):
    sim.advance()
print(BACKEND, time.perf_counter() - t)
"""


def best_of(fun, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fun()
        times.append(time.perf_counter() - t)
    return min(times)


def kernel_cases(n_points=20000, seed=0):
    problem = example(3)
    h = 1 / 32
    grid = GridSpec.box(*problem.box, h)
    curve = initial_curve(problem.shape, 0.5 * h)
    geo = build_geometry(curve, classify(grid, curve), 3)
    pm = build_patch_map(geo, lambda x: problem.flow(x, 0.0, h))
    rng = np.random.default_rng(seed)
    ids = rng.integers(0, len(pm), n_points)
    xi = rng.uniform(0.05, 0.95, (n_points, 2))
    xi[pm.kind[ids] != 0] *= 0.45
    pts = _numpy.eval_poly(pm.Gcoef, ids, xi, pm.k)
    ptr, cand = _candidates(pm.hash_ptr, pm.hash_idx, pm.grid, pts)
    return {
        "eval_poly": lambda m: m.eval_poly(pm.Gcoef, ids, xi, pm.k),
        "eval_poly_jac": lambda m: m.eval_poly_jac(pm.Gcoef, ids, xi, pm.k),
        "invert_maps": lambda m: m.invert_maps(
            pm.Gcoef, pm.kind, ptr, cand, pts, pm.k, 1e-13 * h, 1e-10, 30
        ),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--steps", type=int, default=0, help="also time this many simulation steps")
    args = ap.parse_args()

    cases = kernel_cases()
    print(f"{'kernel':<16}{'numpy [ms]':>12}{'numba [ms]':>12}{'speedup':>10}")
    for name, call in cases.items():
        call(_numba)  # JIT compile
        t_np = best_of(lambda: call(_numpy), args.repeat)
        t_nb = best_of(lambda: call(_numba), args.repeat)
        print(f"{name:<16}{1e3 * t_np:>12.2f}{1e3 * t_nb:>12.2f}{t_np / t_nb:>10.1f}")

    if args.steps:
        for backend in ("numpy", "numba"):
            env = dict(os.environ, SBDFCUT_BACKEND=backend)
            out = subprocess.run(
                [sys.executable, "-c", SIM.format(steps=args.steps)],
                env=env, capture_output=True, text=True, check=True,
            ).stdout.split()
            print(f"{args.steps} steps of example 3 at h = 1/32 with {out[0]}: {float(out[1]):.2f} s")


if __name__ == "__main__":
    main()
