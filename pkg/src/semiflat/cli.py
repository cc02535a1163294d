"""Command line entry point.

Exit codes: 0 when every verdict agrees (or the command only reports), 2 when a
correspondence row disagrees, 1 on operational errors.
"""

from __future__ import annotations

import argparse
import sys

from .config import ConfigError, load_config
from .pipeline import PipelineError, run_build_locus, run_check_atlas, run_check_section, run_solve_phase, run_verify
from .report import emit_report

EXIT_OK, EXIT_ERROR, EXIT_DISAGREE = 0, 1, 2

COMMANDS = {
    "check-atlas": (run_check_atlas, "validate charts, transitions and cocycles"),
    "check-section": (run_check_section, "validate the constant section and its gluing"),
    "build-locus": (run_build_locus, "solve the natural parametrization and report diagnostics"),
    "verify": (run_verify, "run the three correspondence rows on the configured field"),
    "solve-phase": (run_solve_phase, "solve the phase equation, then verify the solution"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="semiflat", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_) in COMMANDS.items():
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True, help="run configuration (YAML)")
        p.add_argument("--out", help="output path; stdout when omitted")
        p.add_argument("--format", choices=("json", "csv"), help="report format (default from config, else json)")
        p.add_argument("--grid", type=int, help="nodes per locus axis, overriding the config")
        p.add_argument("--tol", type=float, help="correspondence tolerance, overriding the config")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    runner = COMMANDS[args.command][0]
    try:
        cfg = load_config(args.config)
        kwargs = {"tol": args.tol}
        if args.grid is not None and args.command in ("build-locus", "verify", "solve-phase"):
            kwargs["resolution"] = args.grid
        report = runner(cfg, **kwargs)
        fmt = args.format or cfg.output.format
        text = emit_report(report, fmt, args.out or cfg.output.path)
    except (ConfigError, PipelineError, OSError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_ERROR
    if not (args.out or cfg.output.path):
        sys.stdout.write(text)
    print(f"{args.command}: {report.verdict}", file=sys.stderr)
    for row in report.disagreements:
        print(f"  disagreement in {row}", file=sys.stderr)
    return EXIT_DISAGREE if report.disagreements else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
