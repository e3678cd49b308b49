#!/usr/bin/env python3
"""Velocity-update identity residual under simultaneous space/time refinement."""

import time

from inviscid_lab.freespace import PaddedGrid, build_kernels, serfati_residual, solve_nse_freespace
from inviscid_lab.initial_data import free_quadrupole
from inviscid_lab.solvers import SolverSettings


def main():
    nu, T = 4e-3, 0.3
    print(f"free-space run, nu={nu}, T={T}, moment-free quadrupole datum")
    print(f"{'n':>6} {'dt':>9} {'residual':>12} {'dd L2 norms':>24} {'seconds':>8}")
    prev = None
    for n, dt, ce in ((128, 4e-3, 3), (256, 2e-3, 5), (512, 1e-3, 10)):
        grid = PaddedGrid(n, 4.0)
        w0 = free_quadrupole(grid)
        t0 = time.time()
        traj = solve_nse_freespace(w0, nu, T, SolverSettings(dt=dt, checkpoint_every=ce))
        kernels = build_kernels(grid, 0.5, 1.0)
        res = serfati_residual(traj, kernels)
        norms = ", ".join(f"{v:.4f}" for v in kernels.dd_l2_norms())
        ratio = "" if prev is None else f"  ratio {prev / res:4.2f}"
        print(f"{n:>6} {dt:>9.1e} {res:>12.3e} {norms:>24} {time.time() - t0:>8.1f}{ratio}")
        prev = res


if __name__ == "__main__":
    main()
