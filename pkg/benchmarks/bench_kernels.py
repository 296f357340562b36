"""Time the numba and numpy paths of the hot kernels side by side.

    python benchmarks/bench_kernels.py [--grid 48] [--repeat 3]

The first numba call includes JIT compilation (or a cache load), so it is
reported separately from the steady-state timing.
"""
import argparse
import time

import numpy as np

from unsurf import _accel
from unsurf.geometry import GridSpec, icosphere, mesh_to_sdf, trilinear_sample


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return min(times), out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--grid", type=int, default=48)
    ap.add_argument("--subdiv", type=int, default=4)
    ap.add_argument("--points", type=int, default=500_000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    mesh = icosphere(args.subdiv, 0.35 * args.grid)
    grid = GridSpec.centered(args.grid, 1.0)
    rng = np.random.default_rng(0)
    lo = np.array(grid.origin)
    hi = lo + (np.array(grid.dims) - 1) * np.array(grid.spacing)
    pts = rng.uniform(lo, hi, (args.points, 3))
    backends = ["numba", "numpy"] if _accel.HAS_NUMBA else ["numpy"]

    print(f"mesh {mesh.n_vertices} vertices / {mesh.n_triangles} triangles, grid {args.grid}^3, "
          f"{args.points} sample points")
    print(f"{'kernel':<18}{'backend':<8}{'first s':>10}{'best s':>10}{'max |diff|':>12}")
    vol = None
    for name, call in (
        ("mesh_to_sdf", lambda b: mesh_to_sdf(mesh, grid, 5.0, backend=b).data),
        ("trilinear_sample", lambda b: trilinear_sample(vol, pts, backend=b)),
    ):
        ref = None
        for b in backends:
            t0 = time.perf_counter()
            first = call(b)
            t_first = time.perf_counter() - t0
            t_best, out = best_of(lambda: call(b), args.repeat)
            diff = 0.0 if ref is None else float(np.max(np.abs(out - ref)))
            ref = out if ref is None else ref
            print(f"{name:<18}{b:<8}{t_first:>10.3f}{t_best:>10.3f}{diff:>12.1e}")
        if vol is None:
            vol = mesh_to_sdf(mesh, grid, 5.0)


if __name__ == "__main__":
    main()
