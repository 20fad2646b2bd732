"""Command-line entry point: ``spdefilter <command> --config FILE [options]``."""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from .experiment import (
    ConfigError,
    emit_plot_data,
    load_config,
    path_seed,
    run_convergence_study,
    run_filter_experiment,
    run_flow_validation,
    write_convergence_csv,
    write_records,
)
from .flow import simulate_system, write_trajectory_csv
from .spde import NumericalError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3


def _parser():
    p = argparse.ArgumentParser(prog="spdefilter", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in [
        ("simulate", "simulate signal/observation paths and dump t,X,Y CSVs"),
        ("filter", "run the selected filter methods on recorded paths"),
        ("validate-flow", "evolution-identity and flow-SPDE residuals of the drift flow"),
        ("converge", "refinement-ladder convergence table"),
        ("emit-plots", "run the filter experiment and write tidy plot CSVs"),
    ]:
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", required=True, help="JSON experiment config")
        sp.add_argument("--seed", type=int, default=None, help="override seeds.master")
        sp.add_argument("--out", default=None, help="output directory")
        sp.add_argument("--methods", default=None,
                        help="comma-separated subset of spde,particle,kalman")
        sp.add_argument("--workers", type=int, default=1, help="paths processed concurrently")
        sp.add_argument("--quiet", action="store_true")
    return p


def _write_rows(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(rows[0]) if rows else [])
        for r in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in r.values()])


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    methods = None if args.methods is None else [m.strip() for m in args.methods.split(",") if m.strip()]
    try:
        cfg = load_config(args.config, seed=args.seed, methods=methods, out_dir=args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    say = (lambda *a: None) if args.quiet else print

    try:
        if args.command == "simulate":
            for p in range(cfg.n_paths):
                X, Y, _, _ = simulate_system(cfg.model, cfg.tgrid, path_seed(cfg.master_seed, p))
                write_trajectory_csv(out / f"trajectory_path{p}.csv", X, Y)
            say(f"wrote {cfg.n_paths} trajectories to {out}")
        elif args.command == "filter":
            records = run_filter_experiment(cfg, workers=args.workers)
            jl, summary = write_records(records, out)
            for r in records:
                ests = "  ".join(f"{k}={v.m_T:+.6f}" for k, v in r.estimates.items())
                say(f"path {r.path_index:3d} [{r.status}] truth={r.truth:+.6f}  {ests}")
            say(f"wrote {jl} and {summary}")
            if any(r.status != "ok" for r in records):
                return EXIT_NUMERICAL
        elif args.command == "validate-flow":
            rows = run_flow_validation(cfg)
            _write_rows(rows, out / "flow_validation.csv")
            for r in rows:
                say(f"path {r['path_index']:3d} evolution={r['evolution_residual']:.3e} "
                    f"lemma1={r['lemma1_residual']:.3e}")
        elif args.command == "converge":
            rows = run_convergence_study(cfg)
            write_convergence_csv(rows, out / "convergence.csv")
            for r in rows:
                say(f"level {r['level']} N={r['N']:5d} M={r['M']:4d} "
                    f"error={r['abs_error']:.3e} lemma1_rms={r['lemma1_rms']:.3e}")
        elif args.command == "emit-plots":
            records = run_filter_experiment(cfg, workers=args.workers)
            rows = run_convergence_study(cfg) if cfg.ladder else None
            for path in emit_plot_data(records, out, rows):
                say(f"wrote {path}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
