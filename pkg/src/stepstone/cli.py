"""Command line front end: one subcommand per experiment kind.

    stepstone <subcommand> [--config FILE] [--seed N] [--reps N] [--out DIR]
                           [--set key=value ...]

Config files are `key = value` lines (see harness.parse_config); --set and
the dedicated flags override file values.  Exit code 0 when the experiment's
pass flag is set, 1 otherwise.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import experiments  # noqa: F401  (registers kinds)
from .harness import ExperimentSpec, experiment_kinds, parse_config, parse_value, run

KIND_HELP = {
    "simulate-forward": "forward biased-voter run, emits density CSVs",
    "replay-duality": "exact pathwise duality check on shared event logs",
    "dual-mc": "Monte Carlo duality at finite n (modes: product, tracer)",
    "bbm": "cross-scale duality: SPDE ensemble vs branching Brownian dual",
    "coalescence-ladder": "Theorem-2 style rescaled coalescence-time ladder",
    "spde": "gamma=0 reduction of the coupled solver to the PDE",
    "coupled-spde": "u-marginal consistency of the coupled solver",
    "martingale-residual": "martingale-problem residual and quadratic variation",
    "moment-duality": "moment duality, generator drift, chain jump rates",
    "coupled-duality": "coupled duality identity, scalar mode",
    "kernel-check": "lattice heat-kernel identities",
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="stepstone",
        description="Monte Carlo laboratory for the biased voter model, its "
        "branching-coalescing duals, and Wright-Fisher SPDE limits.",
    )
    sub = parser.add_subparsers(dest="kind", required=True)
    for kind in experiment_kinds():
        p = sub.add_parser(kind, help=KIND_HELP.get(kind, kind))
        p.add_argument("--config", help="key = value config file")
        p.add_argument("--seed", type=int, default=None, help="master seed")
        p.add_argument("--reps", type=int, default=None,
                       help="replica count (maps to the kind's reps parameter)")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a single parameter")
        p.add_argument("--quiet", action="store_true", help="suppress report dump")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    params = {}
    master_seed = 0
    if args.config:
        params = parse_config(args.config)
        master_seed = int(params.pop("master_seed", master_seed))
        params.pop("kind", None)
    for item in args.set:
        if "=" not in item:
            raise SystemExit(f"--set needs KEY=VALUE, got {item!r}")
        key, val = item.split("=", 1)
        params[key.strip()] = parse_value(val)
    if args.seed is not None:
        master_seed = args.seed
    if args.reps is not None:
        params["reps"] = args.reps
    reps = params.get("reps", 1)
    spec = ExperimentSpec(
        kind=args.kind,
        params=params,
        reps=reps if isinstance(reps, int) else 1,
        master_seed=master_seed,
        out=args.out,
    )
    record, report = run(spec)
    if not args.quiet:
        print(record.to_json())
    else:
        print(f"{args.kind}: {'PASS' if record.passed else 'FAIL'} "
              f"({record.wall_time_s:.1f}s)")
    return 0 if record.passed else 1


if __name__ == "__main__":
    sys.exit(main())
