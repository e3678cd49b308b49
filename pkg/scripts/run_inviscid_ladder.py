#!/usr/bin/env python3
"""Viscosity-ladder experiment at desk scale, emitting CSV/JSON/plots.

Runs the capped singular datum toward the inviscid reference and prints the
fitted convergence models.  Pass --full for the acceptance-scale N=256
ladder (a couple of minutes); default is a fast N=128 variant.
"""

import argparse
import time

from inviscid_lab.experiments import LadderConfig, plot_report, run_ladder


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--full", action="store_true", help="acceptance-scale N=256 ladder")
    ap.add_argument("--out", default="ladder_out")
    ap.add_argument("--threads", type=int, default=2)
    args = ap.parse_args()

    cfg = LadderConfig.from_dict(dict(
        domain="torus",
        initial_datum={"name": "lp-singular", "params": {"alpha": 1.5, "p": 1.3, "cap": 25.0}},
        nus=[1e-2, 3e-3, 1e-3, 3e-4],
        T=0.5,
        N=256 if args.full else 128,
        dt=1e-3 if args.full else 2e-3,
        p_list=[1.3, 2.0],
        M=64,
        master_seed=12,
        n_seed=16,
        output_dir=args.out,
    ))
    t0 = time.time()
    report = run_ladder(cfg, threads=args.threads)
    plot_report(report)
    print(f"finished in {time.time() - t0:.0f}s, output in {args.out}")
    print("sup_t vorticity errors:", report.summary["sup_vort_error"])
    print("strictly decreasing:", report.summary["vort_error_strictly_decreasing"])
    for key in ("rate_fit_power", "rate_fit_log"):
        fit = report.summary[key]
        print(f"{key}: exponent {fit['exponent']:.4g}, prefactor {fit['prefactor']:.4g}, "
              f"residual {fit['residual']:.3g}")


if __name__ == "__main__":
    main()
