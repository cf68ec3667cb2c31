#!/usr/bin/env python3
"""Benchmark of the numba kernels against the pure-numpy fallbacks.

Times three hot paths on representative workloads:

  * batched return mapping over a large strut population
  * one fused DNS assembly pass (strains, stress update, forces, stiffness)
  * a batch of unit-cell solves as seen by one macro assembly

Run from the repository root:

    python3 benchmarks/bench_kernels.py [--repeat N]

The numba build is compiled (and cached) on first use; the timing loop runs
after a warm-up call.
"""

import argparse
import time

import numpy as np

from latticehom import ALSI10MG, generate_lattice, make_unit_cell
from latticehom import kernels
from latticehom.material import RM_TOL_REL

MAT = ALSI10MG
RM_TOL = RM_TOL_REL * MAT.sigma_y0


def timeit(fn, repeat):
    fn()  # warm-up / JIT
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_return_map(nb, repeat, n=200_000):
    rng = np.random.default_rng(1)
    eps = rng.uniform(-0.02, 0.02, n)
    eps_pl = rng.uniform(-0.005, 0.005, n)
    alpha = rng.uniform(0.0, 0.03, n)
    q = rng.uniform(-100.0, 100.0, n)
    args = (eps, eps_pl, alpha, q, MAT.E, MAT.H, MAT.sigma_y0, MAT.Q_inf, MAT.b, RM_TOL)
    rows = [("return_map_batch (numpy)", timeit(lambda: kernels.return_map_batch_np(*args), repeat))]
    if nb:
        rows.append(("return_map_batch (numba)", timeit(lambda: nb["return_map_batch"](*args), repeat)))
    return rows


def bench_truss_assembly(nb, repeat):
    lat = generate_lattice("x_braced", 128, 32, 1.0, 0.1)
    rng = np.random.default_rng(2)
    u = rng.normal(0.0, 1e-3, lat.n_dof)
    args = (u, lat.node_i, lat.node_j, lat.cx, lat.cy, lat.length, lat.area,
            lat.eps_pl, lat.alpha, lat.q,
            MAT.E, MAT.H, MAT.sigma_y0, MAT.Q_inf, MAT.b, RM_TOL)
    label = f"truss_system 128x32 x-braced ({lat.n_struts} struts)"
    rows = [(f"{label} (numpy)", timeit(lambda: kernels.truss_system_np(*args), repeat))]
    if nb:
        rows.append((f"{label} (numba)", timeit(lambda: nb["truss_system"](*args), repeat)))
    return rows


def bench_micro_batch(nb, repeat, ngp=2048):
    cell = make_unit_cell("triangular", 1.0, 0.1, 1.0)
    rng = np.random.default_rng(3)
    eps_hat = rng.uniform(-4e-3, 4e-3, (ngp, 3))
    zeros = np.zeros((ngp, cell.n_struts))
    args = (cell.node_i, cell.node_j, cell.cx, cell.cy, cell.lengths, cell.areas,
            cell.B0, cell.Be, cell.V_uc, eps_hat, zeros, zeros.copy(), zeros.copy(),
            MAT.E, MAT.H, MAT.sigma_y0, MAT.Q_inf, MAT.b, RM_TOL,
            1e-9 * MAT.E * cell.A, 25, 1e-10)
    label = f"micro_solve_batch {ngp} points, triangular cell"
    rows = [(f"{label} (numpy)", timeit(lambda: kernels.micro_solve_batch_np(*args), repeat))]
    if nb:
        rows.append((f"{label} (numba)", timeit(lambda: nb["micro_solve_batch"](*args), repeat)))
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    nb = None
    try:
        nb = kernels._build_numba_kernels()
    except ImportError:
        print("numba unavailable: timing the numpy fallback only\n")

    rows = []
    rows += bench_return_map(nb, args.repeat)
    rows += bench_truss_assembly(nb, args.repeat)
    rows += bench_micro_batch(nb, args.repeat)

    width = max(len(name) for name, _ in rows)
    print(f"{'kernel':<{width}}  best [ms]")
    base = {}
    for name, t in rows:
        tag = name.rsplit("(", 1)[0]
        line = f"{name:<{width}}  {1e3 * t:9.2f}"
        if "(numpy)" in name:
            base[tag] = t
        elif tag in base:
            line += f"   ({base[tag] / t:.1f}x speedup)"
        print(line)


if __name__ == "__main__":
    main()
