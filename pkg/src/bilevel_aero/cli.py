"""Command line entry point: ``run`` an experiment or ``verify`` a property suite.

Exit codes: 0 success, 1 failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .experiment import ConfigError, load_config, run_experiment
from .verification import SUITES

EXIT_OK, EXIT_FAILURE, EXIT_CONFIG = 0, 1, 2

log = logging.getLogger("bilevel_aero")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bilevel-aero", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="synthesize data and run bi-level and direct Landweber")
    run.add_argument("--config", help="TOML file with [geometry], [inversion] and [experiment] keys")
    run.add_argument("--noise", type=float, help="relative noise level, e.g. 0.01")
    run.add_argument("--seed", type=int, help="noise seed")
    run.add_argument("--out", help="output directory")
    mode = run.add_mutually_exclusive_group()
    mode.add_argument("--serial", dest="serial", action="store_true", default=None,
                      help="run the two methods one after the other (default; fair timings)")
    mode.add_argument("--parallel", dest="serial", action="store_false", help="run both methods concurrently")
    run.add_argument("--emit-fields", action="store_true", default=None, help="write mesh and field dumps")

    verify = sub.add_parser("verify", help="run a property suite")
    verify.add_argument("--suite", required=True, choices=sorted(SUITES))
    return parser


def _overrides(args) -> dict:
    pairs = {
        "inversion.noise_level": args.noise,
        "inversion.seed": args.seed,
        "experiment.output_directory": args.out,
        "experiment.serial": args.serial,
        "experiment.emit_fields": args.emit_fields,
    }
    return {k: v for k, v in pairs.items() if v is not None}


def _cmd_run(args) -> int:
    try:
        config = load_config(args.config, **_overrides(args))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    summary = run_experiment(config)
    for method in ("bilevel", "direct"):
        s = summary[method]
        print(f"{method}: {s['stop_reason']} at j={s['iterations']}, residual={s['final_residual']:.4g} "
              f"(tau*delta={s['tau_delta']:.4g}), error={s['final_error']:.4g}, "
              f"time={s['total_time']:.3f}s, refinements={s['refinement_count']}")
    print(f"outputs written to {config.output_directory}")
    return EXIT_OK


def _cmd_verify(args) -> int:
    result = SUITES[args.suite]()
    print(result.report())
    return EXIT_OK if result.passed else EXIT_FAILURE


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _cmd_run(args) if args.command == "run" else _cmd_verify(args)
    except Exception as exc:  # diagnostic on stderr, nonzero exit
        log.debug("command failed", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
