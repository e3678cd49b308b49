"""Command-line entry point: simulate | flows | ladder | serfati | report.

Each subcommand reads a JSON config (strict keys, unknown keys are errors)
and writes into --out.  --seed overrides the config master seed and
--threads sets the ladder worker count; outputs are byte-identical across
reruns and thread counts for fixed config and seed.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import BadParams
from .experiments import ConvergenceReport, LadderConfig, plot_report, run_ladder
from .flows import (
    integrate_backward_flow,
    integrate_stochastic_flow,
    save_ensemble,
    seed_grid,
)
from .freespace import PaddedGrid, build_kernels, serfati_residual, solve_nse_freespace
from .initial_data import initial_datum, initial_datum_freespace
from .solvers import SolverSettings, load_trajectory, save_trajectory, solve_nse
from .spectral import TorusGrid


def _load_config(path, required, optional):
    cfg = json.loads(Path(path).read_text())
    unknown = set(cfg) - set(required) - set(optional)
    if unknown:
        raise BadParams(f"unknown config keys: {sorted(unknown)}")
    missing = set(required) - set(cfg)
    if missing:
        raise BadParams(f"missing config keys: {sorted(missing)}")
    merged = dict(optional)
    merged.update(cfg)
    return merged


def _cmd_simulate(args):
    cfg = _load_config(
        args.config,
        required=("initial_datum", "nu", "T", "N", "dt"),
        optional={"domain": "torus", "checkpoint_every": 1, "box": 4.0, "dealias": True},
    )
    settings = SolverSettings(dt=cfg["dt"], checkpoint_every=cfg["checkpoint_every"],
                              dealias=cfg["dealias"])
    out = Path(args.out or "trajectory_out")
    if cfg["domain"] == "torus":
        grid = TorusGrid(cfg["N"])
        datum = initial_datum(cfg["initial_datum"]["name"],
                              cfg["initial_datum"].get("params", {}), grid)
        traj = solve_nse(datum, cfg["nu"], cfg["T"], settings)
        save_trajectory(traj, out)
    else:
        grid = PaddedGrid(cfg["N"], cfg["box"])
        datum = initial_datum_freespace(cfg["initial_datum"]["name"],
                                        cfg["initial_datum"].get("params", {}), grid)
        traj = solve_nse_freespace(datum, cfg["nu"], cfg["T"], settings)
        out.mkdir(parents=True, exist_ok=True)
        from . import container

        manifest = {"nu": traj.nu, "dt": cfg["dt"], "N": cfg["N"], "box": cfg["box"],
                    "times": traj.times.tolist(), "domain": "freespace"}
        (out / "manifest.json").write_text(json.dumps(manifest, indent=1))
        for i, f in enumerate(traj.frames):
            container.write_block(out / f"omega_{i:06d}.ivlb", f.values, kind="vorticity")
    print(f"wrote trajectory with {len(traj.times)} checkpoints to {out}")
    return 0


def _cmd_flows(args):
    cfg = _load_config(
        args.config,
        required=("trajectory", "t", "n_seed"),
        optional={"kind": "deterministic", "nu": 0.0, "M": 16, "master_seed": 0,
                  "s_values": None, "step": None},
    )
    traj = load_trajectory(cfg["trajectory"])
    seeds = seed_grid(cfg["n_seed"])
    master_seed = args.seed if args.seed is not None else cfg["master_seed"]
    if cfg["kind"] == "deterministic":
        ens = integrate_backward_flow(traj, cfg["t"], seeds, step=cfg["step"],
                                      s_values=cfg["s_values"], seed_grid_n=cfg["n_seed"])
    elif cfg["kind"] == "stochastic":
        ens = integrate_stochastic_flow(traj, cfg["t"], cfg["nu"], seeds, cfg["M"],
                                        master_seed, step=cfg["step"],
                                        s_values=cfg["s_values"], seed_grid_n=cfg["n_seed"])
    else:
        raise BadParams(f"kind must be deterministic or stochastic, got {cfg['kind']!r}")
    out = Path(args.out or "ensemble_out")
    save_ensemble(ens, out)
    print(f"wrote {cfg['kind']} ensemble ({ens.n_seeds} seeds) to {out}")
    return 0


def _cmd_ladder(args):
    config = LadderConfig.load(args.config)
    if args.seed is not None:
        config.master_seed = args.seed
    if args.out is not None:
        config.output_dir = args.out
    report = run_ladder(config, threads=args.threads)
    plot_report(report)
    status = report.summary.get("status")
    print(f"ladder finished: {len(report.rows)} rows, status {status}, "
          f"output in {config.output_dir}")
    return 0 if status == "ok" else 1


def _cmd_serfati(args):
    cfg = _load_config(
        args.config,
        required=("N", "nu", "T", "dt"),
        optional={"box": 4.0, "initial_datum": {"name": "quadrupole", "params": {}},
                  "checkpoint_every": 5, "r1": None, "r2": None},
    )
    grid = PaddedGrid(cfg["N"], cfg["box"])
    datum = initial_datum_freespace(cfg["initial_datum"]["name"],
                                    cfg["initial_datum"].get("params", {}), grid)
    settings = SolverSettings(dt=cfg["dt"], checkpoint_every=cfg["checkpoint_every"])
    traj = solve_nse_freespace(datum, cfg["nu"], cfg["T"], settings)
    kernels = build_kernels(grid, cfg["r1"], cfg["r2"])
    residual = serfati_residual(traj, kernels)
    out = Path(args.out or "serfati_out")
    out.mkdir(parents=True, exist_ok=True)
    result = {
        "N": cfg["N"], "box": cfg["box"], "nu": cfg["nu"], "T": cfg["T"], "dt": cfg["dt"],
        "residual_rel_l2": residual,
        "kernel_dd_l2_norms": list(kernels.dd_l2_norms()),
        "kernel_lap_l2_norms": list(kernels.lap_lq_norms(2.0)),
    }
    (out / "serfati.json").write_text(json.dumps(result, indent=1, sort_keys=True))
    print(f"velocity-update residual at t={cfg['T']}: {residual:.4e} (saved to {out})")
    return 0


def _cmd_report(args):
    outdir = Path(args.out or ".")
    summary_path = outdir / "summary.json"
    if not summary_path.exists():
        raise BadParams(f"no summary.json under {outdir}")
    summary = json.loads(summary_path.read_text())
    config = LadderConfig.from_dict(summary["config"])
    config.output_dir = str(outdir)
    rows = _rows_from_csv(outdir / "ladder.csv", config)
    report = ConvergenceReport(config, rows, summary)
    paths = plot_report(report)
    print(f"status: {summary.get('status')}")
    for key in ("rate_fit_power", "rate_fit_log"):
        if key in summary:
            f = summary[key]
            print(f"{key}: exponent {f['exponent']:.4g}, prefactor {f['prefactor']:.4g}, "
                  f"residual {f['residual']:.3g}")
    print("plots:", ", ".join(str(p) for p in paths))
    return 0


def _rows_from_csv(path, config):
    lines = Path(path).read_text().strip().split("\n")
    cols = lines[0].split(",")
    rows = []
    for line in lines[1:]:
        row = {}
        for c, cell in zip(cols, line.split(",")):
            row[c] = float(cell) if cell else None
        rows.append(row)
    return rows


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="inviscid-lab",
                                     description="2D vorticity dynamics laboratory")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn, needs_config in (
        ("simulate", _cmd_simulate, True),
        ("flows", _cmd_flows, True),
        ("ladder", _cmd_ladder, True),
        ("serfati", _cmd_serfati, True),
        ("report", _cmd_report, False),
    ):
        p = sub.add_parser(name)
        p.add_argument("--config", required=needs_config, help="JSON config path")
        p.add_argument("--seed", type=int, default=None, help="master seed override")
        p.add_argument("--threads", type=int, default=1, help="worker threads")
        p.add_argument("--out", default=None, help="output directory")
        p.set_defaults(func=fn)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except BadParams as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
