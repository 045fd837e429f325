"""Command-line entry point: run, fit, baseline, verify, config.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .asymptote_fit import DEFAULT_A_TOL, DEFAULT_SLOPE_TOL, SingularFitError
from .config import PRESETS, ConfigError, RunConfig, dump_config, load_config, preset
from .mc_harness import CsvSchemaError, ExperimentError, read_csv, resolve_threads, run_and_write
from .report import baseline_report, fit_report, write_fit_json, write_plot_data

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

log = logging.getLogger("ipcfit")


class UsageError(Exception):
    pass


def _load_run_config(args) -> RunConfig:
    if args.config and args.preset:
        raise UsageError("give either --config or --preset, not both")
    if args.config:
        cfg = load_config(args.config)
        if args.paper_scale:
            raise UsageError("--paper-scale only applies to presets")
    elif args.preset:
        cfg = preset(args.preset, paper_scale=args.paper_scale)
    else:
        raise UsageError("one of --config or --preset is required")
    plan = cfg.plan
    if args.seed is not None:
        plan = replace(plan, base_seed=args.seed)
    if args.threads is not None:
        plan = replace(plan, threads=args.threads)
    cfg = replace(cfg, plan=plan)
    if args.out:
        cfg = replace(cfg, out_dir=args.out)
    return cfg


def cmd_run(args) -> int:
    cfg = _load_run_config(args)
    threads = resolve_threads(args.threads if args.threads is not None else (cfg.plan.threads if cfg.plan.threads > 1 else None))
    rows = run_and_write(cfg.plan, cfg.out_dir, threads=threads)
    Path(cfg.out_dir, "config.ini").write_text(dump_config(cfg))
    print(f"wrote {len(rows)} rows to {Path(cfg.out_dir) / 'results.csv'}")
    return EXIT_OK


def cmd_fit(args) -> int:
    rows = read_csv(args.results)
    if len({r.T for r in rows}) < 2:
        print(f"error: {args.results} has fewer than 2 distinct data lengths", file=sys.stderr)
        return EXIT_FAIL
    report = fit_report(rows, a_tol=args.a_tol, slope_tol=args.slope_tol)
    out = Path(args.out) if args.out else Path(args.results).parent
    write_plot_data(out, rows, report, gnuplot=not args.no_gnuplot)
    write_fit_json(out / "fit.json", report)
    print(json.dumps(report, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_baseline(args) -> int:
    rows = read_csv(args.results)
    rep = baseline_report(rows, dof=args.dof, p=args.p)
    print(f"T = {rep['T']}, dof = {rep['dof']}, p = {rep['p']:g}")
    print(f"threshold        {rep['threshold']:.6f}")
    print(f"training mean    {rep['training_mean']:.7f}")
    print(f"empirical IPC    {rep['empirical_ipc']:.7f}")
    if "fitted_a" in rep:
        print(f"asymptote a      {rep['fitted_a']:.7f}")
    return EXIT_OK


def cmd_verify(args) -> int:
    from .verify import run_checks

    threads = resolve_threads(args.threads)
    results = run_checks(
        quick=args.quick,
        threads=threads,
        out_dir=args.out,
        seed=args.seed if args.seed is not None else 0,
        report=lambda r: print(r.line(), flush=True),
    )
    failed = [r.name for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed" + (f"; failed: {', '.join(failed)}" if failed else ""))
    return EXIT_OK if not failed else EXIT_FAIL


def cmd_config(args) -> int:
    if args.preset:
        cfg = preset(args.preset, paper_scale=args.paper_scale)
    elif args.config:
        cfg = load_config(args.config)
    else:
        raise UsageError("one of --preset or --config is required")
    sys.stdout.write(dump_config(cfg))
    return EXIT_OK


def _add_run_flags(p):
    p.add_argument("--config", metavar="PATH", help="INI run configuration")
    p.add_argument("--preset", choices=PRESETS, help="built-in experiment")
    p.add_argument("--paper-scale", action="store_true", help="use the published (slow) scale for a preset")
    p.add_argument("--out", metavar="DIR", help="output directory")
    p.add_argument("--threads", type=int, metavar="K", help="worker processes (env IPC_LIMIT_THREADS)")
    p.add_argument("--seed", type=int, metavar="S", help="base seed override")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ipcfit", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a Monte Carlo experiment, write results.csv + manifest.json")
    _add_run_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("fit", help="fit asymptotes to a results CSV")
    p.add_argument("results", help="results.csv from 'ipcfit run'")
    p.add_argument("--out", metavar="DIR", help="where to write fit.json and plot data (default: next to the CSV)")
    p.add_argument("--a-tol", type=float, default=DEFAULT_A_TOL)
    p.add_argument("--slope-tol", type=float, default=DEFAULT_SLOPE_TOL)
    p.add_argument("--no-gnuplot", action="store_true", help="skip the gnuplot script")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("baseline", help="threshold-gated empirical IPC at the largest T")
    p.add_argument("results")
    p.add_argument("--dof", type=int, required=True, help="chi-square degrees of freedom (readout size)")
    p.add_argument("--p", type=float, default=1e-4, help="tail probability (default 1e-4)")
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("verify", help="run the acceptance checks")
    p.add_argument("--quick", action="store_true", help="skip the reservoir-scale checks")
    p.add_argument("--threads", type=int, metavar="K")
    p.add_argument("--seed", type=int, metavar="S")
    p.add_argument("--out", metavar="DIR", help="keep the CSVs of the experiment runs here")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("config", help="print a fully-defaulted configuration")
    p.add_argument("--preset", choices=PRESETS)
    p.add_argument("--config", metavar="PATH")
    p.add_argument("--paper-scale", action="store_true")
    p.set_defaults(func=cmd_config)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename}", file=sys.stderr)
        return EXIT_USAGE
    except CsvSchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ExperimentError, SingularFitError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
