"""Acceptance suite: one test per criterion, one printed verdict line each.

Every tolerance is pinned here; nothing is deferred to later calibration.
Oracles are independent of the code paths they check: closed-form solutions,
hand-computed integrals, high-accuracy ODE integration, resolution-doubling
self-checks, and exact empirical inequalities.
"""

import time

import numpy as np
import pytest

from inviscid_lab.experiments import LadderConfig, run_ladder
from inviscid_lab.flows import (
    feynman_kac_vorticity,
    integrate_backward_flow,
    integrate_stochastic_flow,
    measure_preservation_defect,
    seed_grid,
)
from inviscid_lab.freespace import PaddedGrid, build_kernels, serfati_residual, solve_nse_freespace
from inviscid_lab.initial_data import (
    free_lp_singular_quadrupole,
    free_quadrupole,
    random_smooth,
    taylor_green,
)
from inviscid_lab.metrics import (
    default_beta_family,
    energy_drop_check,
    enstrophy_bound_check,
    make_beta,
    osgood_bound,
    renormalization_defect,
)
from inviscid_lab.solvers import SolverSettings, SteadyCarrier, solve_nse
from inviscid_lab.spectral import (
    SpectralField,
    TorusGrid,
    l2_distance,
    lp_norm,
    restrict,
    upsample,
)


def verdict(num: int, ok: bool, detail: str):
    print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {num}: {detail}")
    assert ok, f"criterion {num}: {detail}"


# ---------------------------------------------------------------------------
# shared expensive runs


@pytest.fixture(scope="module")
def singular_ladder(tmp_path_factory):
    cfg = LadderConfig.from_dict(dict(
        domain="torus",
        initial_datum={"name": "lp-singular", "params": {"alpha": 1.5, "p": 1.3, "cap": 25.0}},
        nus=[1e-2, 3e-3, 1e-3, 3e-4],
        T=0.5, N=256, dt=1e-3, p_list=[1.3],
        M=64, master_seed=12, n_seed=16,
        output_dir=str(tmp_path_factory.mktemp("singular_ladder")),
    ))
    start = time.time()
    report = run_ladder(cfg, threads=2)
    return report, time.time() - start


@pytest.fixture(scope="module")
def smooth_ladder(tmp_path_factory):
    cfg = LadderConfig.from_dict(dict(
        domain="torus",
        initial_datum={"name": "random-smooth", "params": {"seed": 3, "kmax": 4, "amplitude": 1.0}},
        nus=[1e-2, 3e-3, 1e-3, 3e-4],
        T=0.5, N=256, dt=1.5e-3, p_list=[2.0],
        M=64, master_seed=12, n_seed=16,
        output_dir=str(tmp_path_factory.mktemp("smooth_ladder")),
    ))
    start = time.time()
    report = run_ladder(cfg, threads=2)
    return report, time.time() - start


# ---------------------------------------------------------------------------


def test_criterion_01_taylor_green_exactness():
    start = time.time()
    nu, T = 1e-2, 0.5
    grid = TorusGrid(64)
    tg = taylor_green(grid)
    traj = solve_nse(tg, nu, T, SolverSettings(dt=1e-3, checkpoint_every=100))
    exact = SpectralField(grid, values=tg.values * np.exp(-8 * np.pi**2 * nu * T))
    err = l2_distance(traj.frames[-1], exact) / lp_norm(exact, 2)
    elapsed = time.time() - start
    verdict(1, err <= 1e-8 and elapsed <= 10.0,
            f"Taylor-Green rel L2 error {err:.2e} (tol 1e-8), runtime {elapsed:.1f}s (cap 10s)")


def test_criterion_02_heat_feynman_kac_agreement():
    start = time.time()
    nu, t, M, n_seed = 1e-2, 0.2, 10_000, 16
    grid = TorusGrid(64)
    x1, _ = grid.mesh()
    w0 = SpectralField(grid, values=np.sin(2 * np.pi * x1))
    carrier = SteadyCarrier.zero(grid, t_max=1.0, flow_step=1e-2)
    flow = integrate_stochastic_flow(carrier, t, nu, seed_grid(n_seed), M, 7,
                                     seed_grid_n=n_seed)
    fk, se = feynman_kac_vorticity(upsample(w0, 8), flow)
    gs = TorusGrid(n_seed)
    x1s, _ = gs.mesh()
    # heat-kernel closed form: E[sin(2 pi (x+G))] = sin(2 pi x) e^{-2 pi^2 Var},
    # Var = 2 nu t per component
    exact = SpectralField(gs, values=np.sin(2 * np.pi * x1s) * np.exp(-4 * np.pi**2 * nu * t))
    err = l2_distance(fk, exact)
    tol = 5 * lp_norm(se, 1) + 1e-3
    elapsed = time.time() - start
    verdict(2, err <= tol and elapsed <= 30.0,
            f"Monte Carlo vs analytic decay: {err:.2e} <= {tol:.2e}, runtime {elapsed:.0f}s (cap 30s)")


def test_criterion_03_two_route_consistency():
    start = time.time()
    N, nu, T, M, n_seed = 128, 1e-3, 0.5, 10_000, 32
    grid = TorusGrid(N)
    w0 = random_smooth(grid, seed=42, kmax=3, amplitude=1.0)
    dt = 1.0 / 128
    traj = solve_nse(w0, nu, T, SolverSettings(dt=dt, checkpoint_every=1))
    fine_grid = TorusGrid(2 * N)
    w0f = random_smooth(fine_grid, seed=42, kmax=3, amplitude=1.0)
    fine = solve_nse(w0f, nu, T, SolverSettings(dt=dt / 2, checkpoint_every=10**9))
    doubling = l2_distance(traj.frames[-1], restrict(fine.frames[-1], grid))
    flow = integrate_stochastic_flow(traj, T, nu, seed_grid(n_seed), M, 2024,
                                     seed_grid_n=n_seed)
    fk, se = feynman_kac_vorticity(upsample(w0, 4), flow)
    err = l2_distance(fk, restrict(traj.frames[-1], TorusGrid(n_seed)))
    tol = 5 * lp_norm(se, 1) + 3 * doubling
    elapsed = time.time() - start
    verdict(3, err <= tol and elapsed <= 300.0,
            f"Feynman-Kac vs spectral frame: {err:.2e} <= {tol:.2e} "
            f"(doubling {doubling:.1e}), runtime {elapsed:.0f}s (cap 300s)")


def test_criterion_04_measure_preservation():
    start = time.time()
    grid = TorusGrid(64)
    w0 = random_smooth(grid, seed=21, kmax=3, amplitude=4.0)
    carrier = solve_nse(w0, 0.0, 0.25, SolverSettings(dt=2.5e-3, checkpoint_every=1))
    flow = integrate_backward_flow(carrier, 0.25, seed_grid(1024), seed_grid_n=1024)
    defect = measure_preservation_defect(flow, 16)
    elapsed = time.time() - start
    verdict(4, defect <= 0.05 and elapsed <= 120.0,
            f"max cell deviation {defect:.4f} over 16^2 cells, 1024^2 pooled samples "
            f"(tol 0.05), runtime {elapsed:.0f}s (cap 120s)")


def test_criterion_05_chebyshev_stability_chain(singular_ladder, smooth_ladder):
    checked = 0
    ok = True
    for report, _elapsed in (singular_ladder, smooth_ladder):
        for entry in report.summary["entries"]:
            for srep in entry["stability"].values():
                lhs = srep["superlevel_measure"] * np.log1p(1.0 / srep["eps"])
                rhs = srep["q_integral"]
                ok = ok and (lhs <= rhs * (1 + 1e-12) + 1e-300) and srep["chebyshev_holds"]
                checked += 1
    verdict(5, ok and checked >= 8,
            f"superlevel*ln(1+1/eps) <= q_integral on all {checked} ladder runs "
            f"(eps = max(sqrt(nu), |u_nu - u|_L1L1))")


def test_criterion_06_osgood_dominance():
    start = time.time()
    rng = np.random.default_rng(1234)
    worst = np.inf
    for _ in range(100):
        alpha = float(np.exp(rng.uniform(np.log(1e-6), np.log(0.9))))
        C = float(rng.uniform(0.1, 5.0))
        tau = float(rng.uniform(0.0, 3.0))
        y = alpha
        steps = 2000
        h = tau / steps
        for _ in range(steps):
            f = lambda v: C * v * (2.0 - np.log(v))
            k1 = f(y)
            k2 = f(y + 0.5 * h * k1)
            k3 = f(y + 0.5 * h * k2)
            k4 = f(y + h * k3)
            y += h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        worst = min(worst, (osgood_bound(alpha, C, tau) - y) / max(y, 1e-300))
    elapsed = time.time() - start
    verdict(6, worst >= -1e-9 and elapsed <= 5.0,
            f"closed form >= ODE oracle on 100 random (alpha, C, tau), worst slack "
            f"{worst:.1e} (floor -1e-9), runtime {elapsed:.1f}s (cap 5s)")


def test_criterion_07_inviscid_limit_monotone_envelope(singular_ladder):
    report, elapsed = singular_ladder
    sup_err = [report.summary["sup_vort_error"][repr(nu)] for nu in report.config.nus]
    decreasing = report.summary["vort_error_strictly_decreasing"]
    fit = report.summary["rate_fit_log"]
    nonneg = min(fit["point_residuals"]) >= -1e-12
    verdict(7, decreasing and nonneg and elapsed <= 1800.0,
            f"sup_t L^1.3 errors {['%.3f' % e for e in sup_err]} strictly decreasing; "
            f"envelope {fit['prefactor']:.3g} + {fit['exponent']:.3g}/|ln nu| has min "
            f"residual {min(fit['point_residuals']):.1e}; runtime {elapsed:.0f}s (cap 30min)")


def test_criterion_08_bounded_vorticity_rate(smooth_ladder):
    report, elapsed = smooth_ladder
    slope = report.summary["rate_fit_power"]["exponent"]
    verdict(8, slope >= 0.3 and elapsed <= 1200.0,
            f"log-log slope of sup_t velocity error vs nu: {slope:.3f} (floor 0.3), "
            f"runtime {elapsed:.0f}s (cap 20min)")


def test_criterion_09_renormalization():
    grid = TorusGrid(128)
    w0 = random_smooth(grid, seed=5, kmax=4, amplitude=1.0)
    coarse = solve_nse(w0, 0.0, 1.0, SolverSettings(dt=1e-3, checkpoint_every=100))
    fine_grid = TorusGrid(256)
    w0f = random_smooth(fine_grid, seed=5, kmax=4, amplitude=1.0)
    fine = solve_nse(w0f, 0.0, 1.0, SolverSettings(dt=5e-4, checkpoint_every=200))
    sup = float(np.max(np.abs(w0.values)))
    ok = True
    parts = []
    for beta in default_beta_family(sup):
        rc = renormalization_defect(coarse, beta)
        rf = renormalization_defect(fine, beta)
        disc = float(np.max(np.abs(np.array(rc.values) - np.array(rf.values))))
        defect = float(max(rc.defects))
        ok = ok and defect <= 3.0 * disc
        parts.append(f"defect {defect:.1e} <= 3x{disc:.1e}")
    nse = solve_nse(w0, 1e-2, 0.5, SolverSettings(dt=1e-3, checkpoint_every=50))
    drift = renormalization_defect(nse, make_beta("convex", eta=1e-3 * sup))
    ok = ok and drift.max_increase <= 1e-8
    verdict(9, ok,
            "Euler beta-conservation vs doubling: " + "; ".join(parts)
            + f"; viscous convex drift max increase {drift.max_increase:.1e} (tol 1e-8)")


def test_criterion_10_enstrophy_and_energy_sandwich():
    grid = PaddedGrid(256, 4.0)
    w0 = free_lp_singular_quadrupole(grid, alpha=1.5, p=1.2, cap=15.0)
    drops = []
    ok = True
    worst_e, worst_u = np.inf, np.inf
    for nu in (1e-2, 3e-3, 1e-3, 3e-4):
        traj = solve_nse_freespace(w0, nu, 0.4, SolverSettings(dt=1e-3, checkpoint_every=40))
        margins = enstrophy_bound_check(traj, 1.2)
        rep = energy_drop_check(traj, 1.2)
        scale_e = traj.omega_l2_sq(0)
        scale_u = max(max(rep.bound), max(rep.drop))
        worst_e = min(worst_e, float(np.min(margins)) / scale_e)
        worst_u = min(worst_u, min(min(rep.lower_margin), min(rep.upper_margin)) / scale_u)
        ok = ok and np.min(margins) >= -1e-6 * scale_e
        ok = ok and min(rep.lower_margin) >= -1e-6 * scale_u
        ok = ok and min(rep.upper_margin) >= -1e-6 * scale_u
        drops.append(rep.drop[-1])
    monotone = all(a > b for a, b in zip(drops, drops[1:]))
    verdict(10, ok and monotone,
            f"enstrophy/energy margins >= -1e-6 relative (worst {worst_e:.1e} / "
            f"{worst_u:.1e}); energy drop {['%.3e' % d for d in drops]} "
            f"monotone along the ladder: {monotone}")


def test_criterion_11_serfati_identity_refinement():
    start = time.time()
    nu, T = 4e-3, 0.3
    residuals = {}
    for n, dt, ce in ((256, 2e-3, 5), (512, 1e-3, 10)):
        grid = PaddedGrid(n, 4.0)
        w0 = free_quadrupole(grid)
        traj = solve_nse_freespace(w0, nu, T, SolverSettings(dt=dt, checkpoint_every=ce))
        kernels = build_kernels(grid, 0.5, 1.0)
        residuals[n] = serfati_residual(traj, kernels)
    ratio = residuals[256] / residuals[512]
    elapsed = time.time() - start
    verdict(11, ratio >= 2.0 and elapsed <= 900.0,
            f"velocity-update residual {residuals[256]:.2e} -> {residuals[512]:.2e} "
            f"under doubling (ratio {ratio:.2f} >= 2), runtime {elapsed:.0f}s (cap 15min)")


def test_criterion_12_determinism_across_threads(tmp_path):
    blobs = {}
    for threads in (1, 4, 8):
        out = tmp_path / f"t{threads}"
        cfg = LadderConfig.from_dict(dict(
            domain="torus",
            initial_datum={"name": "random-smooth", "params": {"seed": 11, "kmax": 3}},
            nus=[1e-2, 3e-3, 1e-3],
            T=0.1, N=32, dt=2e-3, p_list=[2.0],
            M=16, master_seed=5, n_seed=8,
            output_dir=str(out),
        ))
        run_ladder(cfg, threads=threads)
        blobs[threads] = (out / "ladder.csv").read_bytes()
    identical = blobs[1] == blobs[4] == blobs[8]
    verdict(12, identical,
            f"ladder CSV byte-identical across thread counts 1/4/8: {identical} "
            f"({len(blobs[1])} bytes)")
