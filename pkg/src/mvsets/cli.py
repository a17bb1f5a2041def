"""Command-line entry point.

Exit status: 0 when every check passes, 1 when a check fails (reports are
still written), 2 for configuration and precondition errors, 3 when a solver
does not converge.
"""
from __future__ import annotations

import argparse
import logging
import sys

from .config import parse_config
from .errors import ConfigError, ConvergenceError, MVSetsError
from .scenario import STEPS, StepError, run_scenario, write_outputs

COMMANDS = {
    "family": ("family", "mean_value"),
    "verify": STEPS,
    "lsw": ("lsw",),
    "expansion": ("expansion",),
    "convergence": ("convergence",),
    "bernoulli": ("bernoulli",),
    "export": ("family",),
}

HELP = {
    "family": "compute the mean-value family and its geometric checks",
    "verify": "run every enabled check",
    "lsw": "compare with the level-set weighted average",
    "expansion": "locate the radius at which a probe node joins the family",
    "convergence": "sup-norm convergence of minimizers in the radius",
    "bernoulli": "minimize the Bernoulli functional on the slab and run its checks",
    "export": "write PGM masks and SVG contours of the family",
}

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3


def build_parser():
    # the global flags are accepted before or after the subcommand
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", default=argparse.SUPPRESS,
                        help="scenario file in key = value form")
    common.add_argument("--out", metavar="DIR", default=argparse.SUPPRESS,
                        help="output directory (overrides output.dir)")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS,
                        help="random seed (overrides seed)")
    common.add_argument("-v", "--verbose", action="count", default=argparse.SUPPRESS)

    parser = argparse.ArgumentParser(prog="mvsets", parents=[common],
                                     description="Mean-value sets and Bernoulli free boundaries on grids.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=HELP[name])
    return parser


def load_config(args):
    if getattr(args, "config", None) is None:
        raise ConfigError("--config is required")
    try:
        with open(args.config, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read {args.config}: {exc.strerror}") from None
    cfg = parse_config(text)
    changes = {}
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    if getattr(args, "out", None) is not None:
        changes["output__dir"] = args.out
    return cfg.replace(**changes) if changes else cfg


def main(argv=None):
    args = build_parser().parse_args(argv)
    verbose = getattr(args, "verbose", 0)
    logging.basicConfig(level=logging.DEBUG if verbose > 1 else logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args)
        res = run_scenario(cfg, COMMANDS[args.command])
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StepError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER if isinstance(exc.cause, ConvergenceError) else EXIT_CONFIG
    except MVSetsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    if args.command == "export":
        res.tables.clear()
        res.checks.clear()
    for path in write_outputs(res, cfg["output.dir"]):
        logging.getLogger(__name__).info("wrote %s", path)
    for c in res.checks:
        status = "PASS" if c.passed else "FAIL"
        print(f"{status} {c.name}: {c.value:.6g}" + (f" ({c.detail})" if c.detail else ""))
    return EXIT_OK if res.passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
