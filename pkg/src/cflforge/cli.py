"""Command-line entry points.

    cflforge run <config.json> [--seed N] [--out DIR] [--save-model]
    cflforge plot <reports...> [--out DIR]
    cflforge compare <reports...> --baseline NAME [--out CSV]

Exit codes: 0 ok, 1 configuration error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import sys
import traceback

from .config import ConfigError, parse_config
from .reporting import (
    ReportError,
    compare_runs,
    emit_plots,
    render_figures,
    save_model_file,
    write_csvs,
    write_reports,
)
from .runner import run_seeds


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cflforge")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run the experiment described by a config file")
    run_p.add_argument("config")
    run_p.add_argument("--seed", type=int, default=None, help="run only this seed")
    run_p.add_argument("--out", default=None, help="override the config output_dir")
    run_p.add_argument(
        "--save-model", action="store_true", help="also write the final flat model vector"
    )

    plot_p = sub.add_parser("plot", help="render SVG charts from saved reports")
    plot_p.add_argument("reports", nargs="+")
    plot_p.add_argument("--out", default="plots")

    cmp_p = sub.add_parser("compare", help="tabulate final metrics across methods")
    cmp_p.add_argument("reports", nargs="+")
    cmp_p.add_argument("--baseline", required=True)
    cmp_p.add_argument("--out", default=None, help="also write the table to this CSV path")
    return parser


def _cmd_run(args) -> int:
    cfg = parse_config(args.config)
    seeds = [args.seed] if args.seed is not None else cfg.seeds
    out_dir = args.out or cfg.output_dir
    reports = run_seeds(cfg, seeds=seeds)
    write_reports(reports, out_dir)
    paths = write_csvs(reports, out_dir)
    render_figures(reports, out_dir)
    if args.save_model:
        for rep in reports:
            save_model_file(rep, out_dir)
    for rep in reports:
        fgt = rep["final_fgt"]
        print(
            f"seed {rep['seed']}: Acc_T={rep['final_acc']:.2f}"
            + (f" Fgt_T={fgt:.2f}" if fgt is not None else " Fgt_T=null")
        )
    print(f"wrote {paths['accuracy_matrix']} and {paths['metrics']}")
    return 0


def _cmd_plot(args) -> int:
    for path in emit_plots(args.reports, args.out):
        print(f"wrote {path}")
    return 0


def _cmd_compare(args) -> int:
    text = compare_runs(args.reports, args.baseline, csv_path=args.out)
    sys.stdout.write(text)
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "plot":
            return _cmd_plot(args)
        return _cmd_compare(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # single CLI error boundary
        traceback.print_exc()
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
