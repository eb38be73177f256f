"""Command-line entry point: simulate, analyze, report.

Exit codes: 0 success, 2 usage/config problem, 3 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import PearlError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pearl",
        description="Adaptive physical-activity nudge engine and trial simulator.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a seeded synthetic trial")
    sim.add_argument("--config", required=True, help="trial config JSON")
    sim.add_argument("--out", required=True, help="output directory")
    sim.add_argument("--seed", type=int, default=None, help="override config seed")
    sim.add_argument("--quiet", action="store_true")

    ana = sub.add_parser("analyze", help="run the statistics suite on a log dir")
    ana.add_argument("log_dir", help="directory holding steps/decisions/feedback CSVs")
    ana.add_argument("--out", default=None, help="output directory (default: log dir)")
    ana.add_argument("--quiet", action="store_true")

    rep = sub.add_parser("report", help="emit plot-ready CSVs and a text summary")
    rep.add_argument("results_dir", help="directory holding results.json")
    rep.add_argument("--out", default=None, help="output directory (default: results dir)")
    rep.add_argument("--quiet", action="store_true")
    return parser


def _cmd_simulate(args) -> int:
    from .dataio import write_trial_log
    from .simulate import TrialConfig, run_trial

    cfg_path = Path(args.config)
    try:
        raw = json.loads(cfg_path.read_text())
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO
    except json.JSONDecodeError as exc:
        print(
            f"error: malformed config {cfg_path}: line {exc.lineno} "
            f"column {exc.colno}: {exc.msg}",
            file=sys.stderr,
        )
        return EXIT_CONFIG

    if args.seed is not None:
        raw["seed"] = args.seed
    try:
        config = TrialConfig.from_dict(raw)
    except PearlError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    log = run_trial(config)
    try:
        manifest = write_trial_log(log, args.out)
    except OSError as exc:
        print(f"error: cannot write outputs: {exc}", file=sys.stderr)
        return EXIT_IO
    if not args.quiet:
        print(
            f"simulated {len(log.arms)} participants x {config.study_days} days "
            f"(seed {config.seed}, config {manifest.config_hash[:12]})"
        )
        print(f"wrote steps.csv, decisions.csv, feedback.csv, manifest.json to {args.out}")
    return EXIT_OK


def _cmd_analyze(args) -> int:
    from .dataio import analyze_log, load_trial_log, write_results

    out_dir = args.out if args.out is not None else args.log_dir
    try:
        log = load_trial_log(args.log_dir)
        results = analyze_log(log)
    except PearlError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: cannot read log: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        write_results(results, out_dir)
    except OSError as exc:
        print(f"error: cannot write results: {exc}", file=sys.stderr)
        return EXIT_IO
    if not args.quiet:
        print(f"wrote table3.csv, table4.csv, table6.csv, results.json to {out_dir}")
    return EXIT_OK


def _cmd_report(args) -> int:
    from .dataio import write_report

    results_path = Path(args.results_dir) / "results.json"
    out_dir = args.out if args.out is not None else args.results_dir
    if not results_path.exists():
        print(f"error: missing {results_path}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        results = json.loads(results_path.read_text())
    except json.JSONDecodeError as exc:
        print(f"error: corrupt results.json: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    warn = (lambda *a, **k: None) if args.quiet else (lambda msg: print(msg, file=sys.stderr))
    try:
        write_report(results, out_dir, warn=warn)
    except OSError as exc:
        print(f"error: cannot write report: {exc}", file=sys.stderr)
        return EXIT_IO
    if not args.quiet:
        print(f"wrote daily_means.csv and summary.txt to {out_dir}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors, matching our config exit code
        return int(exc.code) if exc.code else EXIT_OK
    if args.command == "simulate":
        return _cmd_simulate(args)
    if args.command == "analyze":
        return _cmd_analyze(args)
    return _cmd_report(args)


if __name__ == "__main__":
    sys.exit(main())
