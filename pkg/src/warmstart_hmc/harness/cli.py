"""Command-line entry point: ``warmstart-hmc run <config>`` and ``warmstart-hmc report <dir>``."""

from __future__ import annotations

import argparse
import logging
import sys

from .runner import EXIT_USAGE, report, run


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="warmstart-hmc", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="enable debug logging")
    sub = parser.add_subparsers(dest="command", required=True)
    run_p = sub.add_parser("run", help="run an experiment configuration")
    run_p.add_argument("config", help="path to a key = value configuration file")
    run_p.add_argument("--workers", type=int, default=None, help="worker processes for independent arms")
    run_p.add_argument("--seed-offset", type=int, default=None, help="added to every configured seed")
    run_p.add_argument("--out", default=None, help="output directory (overrides the config)")
    rep_p = sub.add_parser("report", help="verify and summarise a finished run")
    rep_p.add_argument("directory")
    return parser




def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on bad usage and 0 for --help
        return int(exc.code or 0) if exc.code in (0, None) else EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    if args.command == "run":
        return run(args.config, workers=args.workers, seed_offset=args.seed_offset, out=args.out)
    return report(args.directory)


if __name__ == "__main__":
    sys.exit(main())
