"""Command-line entry point: ``auxfdiv <subcommand> [--config PATH] [--seed N] [--out DIR]``.

Exit codes: 0 success, 1 usage or config error, 2 numeric failure,
3 acceptance failure (a grad-check item failed).
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

from .errors import ContractViolation, DomainError, NumericFailure
from .experiments import EXPERIMENTS, ConfigError, load_config, parse_config, run

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_ACCEPTANCE = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value config file")
    common.add_argument("--seed", type=int, help="overrides the config seed")
    common.add_argument("--out", help="output directory")
    parser = _Parser(prog="auxfdiv", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in EXPERIMENTS:
        sub.add_parser(name, parents=[common])
    return parser


def _summary_line(summary: dict) -> str:
    keep = {k: v for k, v in summary.items() if not hasattr(v, "shape")}
    return json.dumps(keep, sort_keys=True, default=str)


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    overrides = {"experiment": args.command, "seed": args.seed, "out": args.out}
    try:
        if args.config:
            config = load_config(args.config, **overrides)
        else:
            config = parse_config("", **overrides)
    except (ConfigError, ContractViolation, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        summary = run(config)
    except (NumericFailure, DomainError) as exc:
        diag = getattr(exc, "diagnostics", {})
        print(f"numeric failure: {exc} {diag}", file=sys.stderr)
        return EXIT_NUMERIC
    except ContractViolation as exc:
        print(f"contract violation: {exc}", file=sys.stderr)
        return EXIT_USAGE
    print(_summary_line(summary))
    if config.experiment == "grad-check" and not summary["all_pass"]:
        return EXIT_ACCEPTANCE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
