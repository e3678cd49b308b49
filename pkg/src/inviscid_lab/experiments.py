"""Ladder orchestration: configs, runs, reports, and plots.

A ladder descends a list of viscosities toward zero, measures every enabled
functional per (nu, checkpoint) against a reference run (the inviscid solve
on the torus; the smallest-viscosity run in free space, where no inviscid
closed form exists), fits convergence models, and emits a CSV with a fixed
column schema plus a JSON summary and static plots.

Determinism contract: a config plus master seed reproduces byte-identical
CSV output for any worker-thread count.  Ladder entries run in a pool with
no shared mutable state beyond the read-only reference; a single writer
merges rows in ladder order.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import BadParams
from .flows import integrate_backward_flow, integrate_stochastic_flow, seed_grid
from .freespace import PaddedGrid, solve_nse_freespace
from .initial_data import initial_datum, initial_datum_freespace
from .metrics import (
    RateFit,
    default_beta_family,
    energy_drop_check,
    enstrophy_bound_check,
    eps_for,
    fit_rate,
    make_beta,
    renormalization_defect,
    stability_report,
    velocity_l1l1_distance,
)
from .solvers import SolverSettings, load_trajectory, save_trajectory, solve_nse
from .spectral import TorusGrid, lp_distance

_DEFAULT_CHECKS = {
    "flows": True,
    "renormalization": True,
    "bounds": True,
    "doubling": False,
}


@dataclass
class LadderConfig:
    """Declarative description of one ladder experiment."""

    domain: str = "torus"
    initial_datum: dict = field(default_factory=lambda: {"name": "taylor-green", "params": {}})
    nus: list = field(default_factory=lambda: [1e-2, 3e-3, 1e-3])
    T: float = 0.5
    N: int = 64
    dt: float = 1e-3
    p_list: list = field(default_factory=lambda: [2.0])
    M: int = 64
    master_seed: int = 0
    checks: dict = field(default_factory=lambda: dict(_DEFAULT_CHECKS))
    output_dir: str = "ladder_out"
    checkpoint_every: int = 0  # 0 = auto (~50 checkpoints)
    n_seed: int = 16
    flow_times: list = field(default_factory=list)  # empty = [T]
    box: float = 4.0
    bound_p: float = 1.2

    _FIELDS = ("domain", "initial_datum", "nus", "T", "N", "dt", "p_list", "M",
               "master_seed", "checks", "output_dir", "checkpoint_every", "n_seed",
               "flow_times", "box", "bound_p")

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.domain not in ("torus", "freespace"):
            raise BadParams(f"domain must be torus or freespace, got {self.domain!r}")
        nus = list(self.nus)
        if not nus or any(nu <= 0 for nu in nus):
            raise BadParams("viscosity ladder must be nonempty with all entries > 0")
        if any(b >= a for a, b in zip(nus, nus[1:])):
            raise BadParams("viscosity ladder must be strictly decreasing")
        if not self.T > 0:
            raise BadParams("T must be positive")
        for p in self.p_list:
            if p != math.inf and not 1 <= p:
                raise BadParams(f"p_list entries must lie in [1, inf], got {p}")
        unknown = set(self.checks) - set(_DEFAULT_CHECKS)
        if unknown:
            raise BadParams(f"unknown check toggles: {sorted(unknown)}")

    @property
    def effective_checkpoint_every(self) -> int:
        if self.checkpoint_every > 0:
            return self.checkpoint_every
        steps = max(1, round(self.T / self.dt))
        return max(1, round(steps / 50))

    @property
    def effective_flow_times(self) -> list:
        return list(self.flow_times) if self.flow_times else [self.T]

    def settings(self) -> SolverSettings:
        return SolverSettings(dt=self.dt, checkpoint_every=self.effective_checkpoint_every)

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self._FIELDS}
        d["p_list"] = ["inf" if p == math.inf else p for p in self.p_list]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "LadderConfig":
        unknown = set(d) - set(cls._FIELDS)
        if unknown:
            raise BadParams(f"unknown config keys: {sorted(unknown)}")
        d = dict(d)
        if "p_list" in d:
            d["p_list"] = [math.inf if p == "inf" else float(p) for p in d["p_list"]]
        if "checks" in d:
            merged = dict(_DEFAULT_CHECKS)
            merged.update(d["checks"])
            d["checks"] = merged
        return cls(**d)

    def dump(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True))

    @classmethod
    def load(cls, path) -> "LadderConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _p_tag(p) -> str:
    return "inf" if p == math.inf else f"{p:g}"


def csv_columns(p_list) -> list:
    cols = ["nu", "t"]
    cols += [f"err_vort_p{_p_tag(p)}" for p in p_list]
    cols += ["err_vel_l2", "energy", "enstrophy", "flow_dist", "q_int", "superlevel",
             "y_val", "renorm_defect", "enstrophy_margin", "energy_margin"]
    return cols


@dataclass
class ConvergenceReport:
    """Rows per (nu, checkpoint) plus a summary block with fits and checks."""

    config: LadderConfig
    rows: list
    summary: dict

    def to_csv_text(self) -> str:
        cols = csv_columns(self.config.p_list)
        lines = [",".join(cols)]
        for row in self.rows:
            cells = []
            for c in cols:
                v = row.get(c)
                cells.append("" if v is None else repr(float(v)))
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"


def _derived_seed(master_seed: int, *key) -> int:
    ss = np.random.SeedSequence(int(master_seed), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _velocity_l2_distance(a, b, i: int) -> float:
    ua, ub = a.velocity(i), b.velocity(i)
    d1 = ua.u1.values - ub.u1.values
    d2 = ua.u2.values - ub.u2.values
    if hasattr(a.grid, "cell_area"):
        return float(np.sqrt(np.sum(d1 * d1 + d2 * d2) * a.grid.cell_area))
    return float(np.sqrt(np.mean(d1 * d1 + d2 * d2)))


def _torus_entry(idx, nu, datum, reference, config: LadderConfig):
    """Rows and summary for one torus ladder viscosity."""
    settings = config.settings()
    traj = solve_nse(datum, nu, config.T, settings)
    if not np.allclose(traj.times, reference.times):
        raise BadParams("ladder run and reference have mismatched checkpoints")
    rows = []
    flow_times = config.effective_flow_times if config.checks.get("flows") else []
    renorm = None
    if config.checks.get("renormalization"):
        sup = max(np.max(np.abs(datum.values)), 1e-12)
        renorm = renormalization_defect(traj, make_beta("convex", eta=1e-3 * sup))
    flow_data = {}
    l1l1 = None
    if flow_times:
        l1l1 = velocity_l1l1_distance(traj, reference)
        seeds = seed_grid(config.n_seed)
        for j, tf in enumerate(flow_times):
            det = integrate_backward_flow(reference, tf, seeds, seed_grid_n=config.n_seed)
            stoch = integrate_stochastic_flow(
                traj, tf, nu, seeds, config.M,
                _derived_seed(config.master_seed, 1, idx, j), seed_grid_n=config.n_seed)
            eps = eps_for(nu, l1l1)
            rep = stability_report(det, stoch, 0.0, eps)
            flow_data[float(tf)] = rep
    for i, t in enumerate(traj.times):
        row = {"nu": nu, "t": float(t)}
        for p in config.p_list:
            row[f"err_vort_p{_p_tag(p)}"] = lp_distance(traj.frames[i], reference.frames[i], p)
        row["err_vel_l2"] = _velocity_l2_distance(traj, reference, i)
        row["energy"] = traj.energy_l2_sq(i)
        row["enstrophy"] = traj.omega_l2_sq(i)
        rep = next((r for tf, r in flow_data.items() if abs(tf - t) <= 1e-9), None)
        if rep is not None:
            row["flow_dist"] = rep.flow_distance
            row["q_int"] = rep.q_integral
            row["superlevel"] = rep.superlevel_measure
            row["y_val"] = rep.y_value
        if renorm is not None:
            row["renorm_defect"] = renorm.drift[i]
        rows.append(row)
    entry_summary = {"nu": nu}
    if flow_data:
        entry_summary["stability"] = {
            repr(tf): {
                "eps": rep.eps,
                "q_integral": rep.q_integral,
                "superlevel_measure": rep.superlevel_measure,
                "chebyshev_rhs": rep.chebyshev_rhs,
                "chebyshev_holds": bool(
                    rep.superlevel_measure * np.log1p(1.0 / rep.eps)
                    <= rep.q_integral * (1.0 + 1e-12) + 1e-300),
                "flow_distance": rep.flow_distance,
                "y_value": rep.y_value,
            }
            for tf, rep in flow_data.items()
        }
        entry_summary["velocity_l1l1_vs_reference"] = l1l1
    if renorm is not None:
        entry_summary["renorm_max_increase"] = renorm.max_increase
    return rows, entry_summary


def _freespace_entry(idx, nu, datum, reference, config: LadderConfig):
    settings = config.settings()
    traj = solve_nse_freespace(datum, nu, config.T, settings)
    rows = []
    margins_e = margins_u = None
    if config.checks.get("bounds"):
        margins_e = enstrophy_bound_check(traj, config.bound_p)
        margins_u = energy_drop_check(traj, config.bound_p)
    for i, t in enumerate(traj.times):
        row = {"nu": nu, "t": float(t)}
        for p in config.p_list:
            d = traj.frames[i].values - reference.frames[i].values
            area = traj.grid.cell_area
            if p == math.inf:
                row[f"err_vort_p{_p_tag(p)}"] = float(np.max(np.abs(d)))
            else:
                row[f"err_vort_p{_p_tag(p)}"] = float((np.sum(np.abs(d) ** p) * area) ** (1 / p))
        row["err_vel_l2"] = _velocity_l2_distance(traj, reference, i)
        row["energy"] = traj.energy_l2_sq(i)
        row["enstrophy"] = traj.omega_l2_sq(i)
        if margins_e is not None:
            row["enstrophy_margin"] = float(margins_e[i])
            row["energy_margin"] = float(margins_u.lower_margin[i])
        rows.append(row)
    entry_summary = {"nu": nu, "energy_drop": traj.energy_l2_sq(0) - traj.energy_l2_sq(len(traj.times) - 1)}
    if margins_e is not None:
        entry_summary["min_enstrophy_margin"] = float(np.min(margins_e))
        entry_summary["min_energy_lower_margin"] = float(np.min(margins_u.lower_margin))
        entry_summary["min_energy_upper_margin"] = float(np.min(margins_u.upper_margin))
    return rows, entry_summary


def _reference_cache_dir(config: LadderConfig):
    root = os.environ.get("INVISCID_LAB_CACHE")
    if not root or config.domain != "torus":
        return None
    key = json.dumps(
        {"datum": config.initial_datum, "N": config.N, "dt": config.dt, "T": config.T,
         "cp": config.effective_checkpoint_every, "seed": config.master_seed},
        sort_keys=True)
    return Path(root) / ("ref_" + hashlib.sha1(key.encode()).hexdigest()[:16])


def run_ladder(config: LadderConfig, threads: int = 1) -> ConvergenceReport:
    """Execute a full ladder experiment and write its report files."""
    config.validate()
    outdir = Path(config.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    summary: dict = {
        "config": config.to_dict(),
        "assumptions": {
            "velocity_weak_star_convergence": "assumed (continuum hypothesis, not checkable discretely)",
        },
    }
    if config.domain == "torus":
        grid = TorusGrid(config.N)
        datum = initial_datum(config.initial_datum["name"],
                              config.initial_datum.get("params", {}), grid)
        summary["datum_sup"] = float(np.max(np.abs(datum.values)))
        cache = _reference_cache_dir(config)
        reference = None
        if cache is not None and cache.is_dir():
            try:
                reference = load_trajectory(cache)
            except Exception:
                reference = None
        if reference is None:
            reference = solve_nse(datum, 0.0, config.T, config.settings())
            if cache is not None:
                save_trajectory(reference, cache)
        for i in range(len(reference.times)):
            reference.velocity(i)  # warm the shared read-only cache
        if config.checks.get("doubling"):
            summary["doubling"] = _doubling_check_torus(config)
        if config.checks.get("renormalization"):
            sup = max(summary["datum_sup"], 1e-12)
            euler_defects = [
                max(renormalization_defect(reference, b).defects)
                for b in default_beta_family(sup)
            ]
            summary["euler_renorm_defects"] = [float(d) for d in euler_defects]
        entry = _torus_entry
    else:
        grid = PaddedGrid(config.N, config.box)
        datum = initial_datum_freespace(config.initial_datum["name"],
                                        config.initial_datum.get("params", {}), grid)
        summary["datum_sup"] = float(np.max(np.abs(datum.values)))
        reference = solve_nse_freespace(datum, config.nus[-1], config.T, config.settings())
        entry = _freespace_entry

    results: list = [None] * len(config.nus)
    try:
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                futures = {
                    pool.submit(entry, i, nu, datum, reference, config): i
                    for i, nu in enumerate(config.nus)
                }
                for fut in futures:
                    results[futures[fut]] = fut.result()
        else:
            for i, nu in enumerate(config.nus):
                results[i] = entry(i, nu, datum, reference, config)
    except Exception as exc:
        rows = [r for res in results if res is not None for r in res[0]]
        summary["status"] = "failed"
        summary["error"] = f"{type(exc).__name__}: {exc}"
        partial = ConvergenceReport(config, rows, summary)
        emit_report(partial, "csv")
        emit_report(partial, "json")
        raise

    rows = []
    entries = []
    for res in results:
        rows.extend(res[0])
        entries.append(res[1])
    summary["entries"] = entries
    summary["status"] = "ok"

    sup_vort = {}
    sup_vel = []
    p_main = config.p_list[0]
    tag = f"err_vort_p{_p_tag(p_main)}"
    for nu in config.nus:
        nu_rows = [r for r in rows if r["nu"] == nu]
        sup_vort[nu] = max(r[tag] for r in nu_rows)
        sup_vel.append(max(r["err_vel_l2"] for r in nu_rows))
    summary["sup_vort_error"] = {repr(nu): sup_vort[nu] for nu in config.nus}
    summary["sup_vel_error"] = {repr(nu): v for nu, v in zip(config.nus, sup_vel)}
    summary["vort_error_strictly_decreasing"] = bool(
        all(sup_vort[a] > sup_vort[b] for a, b in zip(config.nus, config.nus[1:])))
    if len(config.nus) >= 3:
        errs = [sup_vort[nu] for nu in config.nus]
        if min(sup_vel) > 0:
            summary["rate_fit_power"] = _fit_dict(fit_rate(config.nus, sup_vel, mode="power"))
        if min(errs) >= 0:
            summary["rate_fit_log"] = _fit_dict(fit_rate(config.nus, errs, mode="log"))
    report = ConvergenceReport(config, rows, summary)
    emit_report(report, "csv")
    emit_report(report, "json")
    return report


def _fit_dict(fit: RateFit) -> dict:
    return {
        "mode": fit.mode,
        "exponent": fit.exponent,
        "prefactor": fit.prefactor,
        "residual": fit.residual,
        "point_residuals": list(fit.point_residuals),
        "nus": list(fit.nus),
        "errors": list(fit.errors),
    }


def _doubling_check_torus(config: LadderConfig) -> dict:
    """Reference self-check: double N and halve dt, report the discrepancy."""
    fine_cfg_grid = TorusGrid(2 * config.N)
    datum_f = initial_datum(config.initial_datum["name"],
                            config.initial_datum.get("params", {}), fine_cfg_grid)
    settings_f = SolverSettings(dt=config.dt / 2.0,
                                checkpoint_every=2 * config.effective_checkpoint_every)
    fine = solve_nse(datum_f, 0.0, config.T, settings_f)
    grid = TorusGrid(config.N)
    datum = initial_datum(config.initial_datum["name"],
                          config.initial_datum.get("params", {}), grid)
    coarse = solve_nse(datum, 0.0, config.T, config.settings())
    from .spectral import restrict

    sup = {_p_tag(p): 0.0 for p in config.p_list}
    sup["2"] = 0.0
    for i, t in enumerate(coarse.times):
        j = int(np.argmin(np.abs(fine.times - t)))
        rf = restrict(fine.frames[j], grid)
        for p in set(config.p_list) | {2.0}:
            d = lp_distance(coarse.frames[i], rf, p)
            sup[_p_tag(p)] = max(sup[_p_tag(p)], d)
    return {"sup_distance_by_p": sup}


def emit_report(report: ConvergenceReport, fmt: str) -> Path:
    """Write the report as CSV rows or a JSON summary in the output directory."""
    outdir = Path(report.config.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    if fmt == "csv":
        path = outdir / "ladder.csv"
        with open(path, "w", newline="\n") as fh:
            fh.write(report.to_csv_text())
        return path
    if fmt == "json":
        path = outdir / "summary.json"
        path.write_text(json.dumps(report.summary, indent=1, sort_keys=True))
        return path
    raise BadParams(f"unknown report format {fmt!r}")


def plot_report(report: ConvergenceReport) -> list:
    """Static plots: log-log error vs nu with fitted envelopes, energy vs t."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    outdir = Path(report.config.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = []
    nus = list(report.config.nus)
    summary = report.summary

    fig, ax = plt.subplots(figsize=(5, 4))
    if "sup_vort_error" in summary:
        errs = [summary["sup_vort_error"][repr(nu)] for nu in nus]
        ax.loglog(nus, errs, "o-", label="sup_t vorticity error")
    if "sup_vel_error" in summary:
        ax.loglog(nus, [summary["sup_vel_error"][repr(nu)] for nu in nus], "s-",
                  label="sup_t velocity error")
    for key, style in (("rate_fit_power", "--"), ("rate_fit_log", ":")):
        if key in summary:
            f = summary[key]
            grid_nu = np.geomspace(min(nus), max(nus), 64)
            if f["mode"] == "power":
                vals = f["prefactor"] * grid_nu ** f["exponent"]
                lab = f"power fit, slope {f['exponent']:.2f}"
            else:
                vals = f["prefactor"] + f["exponent"] / np.abs(np.log(grid_nu))
                lab = f"envelope {f['prefactor']:.2g} + {f['exponent']:.2g}/|ln nu|"
            ax.loglog(grid_nu, vals, style, label=lab)
    ax.set_xlabel("viscosity")
    ax.set_ylabel("error")
    ax.legend(fontsize=7)
    fig.tight_layout()
    p1 = outdir / "errors_vs_nu.png"
    fig.savefig(p1, dpi=120)
    plt.close(fig)
    paths.append(p1)

    fig, ax = plt.subplots(figsize=(5, 4))
    for nu in nus:
        nu_rows = [r for r in report.rows if r["nu"] == nu]
        ax.plot([r["t"] for r in nu_rows], [r["energy"] for r in nu_rows],
                label=f"nu={nu:g}")
    ax.set_xlabel("t")
    ax.set_ylabel("kinetic energy")
    ax.legend(fontsize=7)
    fig.tight_layout()
    p2 = outdir / "energy_vs_t.png"
    fig.savefig(p2, dpi=120)
    plt.close(fig)
    paths.append(p2)
    return paths
