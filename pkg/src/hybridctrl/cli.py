"""Command-line interface: `simulate`, `truth`, and `report` subcommands.

Exit codes: 0 success, 2 configuration error, 3 failure threshold exceeded.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import harness, metrics, truthoracle
from .exceptions import ConfigError, HybridControlError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PARTIAL_FAILURE = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hybridctrl",
                                     description="Hybrid-control simulation studies")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a replication study")
    sim.add_argument("--config", help="JSON study configuration file")
    sim.add_argument("--scenario", action="append", type=str,
                     help="restrict to a builtin scenario number (repeatable)")
    sim.add_argument("--mt-size", action="append", type=int, dest="mt_sizes",
                     choices=(16, 40), help="MT arm size (repeatable)")
    sim.add_argument("--reps", type=int, help="replications per cell")
    sim.add_argument("--seed", type=int, help="master seed")
    sim.add_argument("--methods", type=str, help="comma-separated method list")
    sim.add_argument("--threads", type=int, help="worker processes")
    sim.add_argument("--out", required=True, help="output directory")

    tru = sub.add_parser("truth", help="compute the true marginal log HR")
    tru.add_argument("--scenario", required=True, type=str, help="builtin scenario number")
    tru.add_argument("--reps", type=int, default=10_000, help="oracle repetitions")
    tru.add_argument("--seed", type=int, default=0)
    tru.add_argument("--out", help="optional cache CSV to write")

    rep = sub.add_parser("report", help="render a study directory")
    rep.add_argument("--in", dest="in_dir", required=True, help="study output directory")
    rep.add_argument("--format", choices=("csv", "table"), default="table")
    return parser


def _load_config(args) -> harness.StudyConfig:
    if args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            config = harness.StudyConfig.from_dict(json.load(fh))
    else:
        config = harness.StudyConfig.from_dict({})
    if args.scenario:
        catalog = {s.name: s for s in harness.builtin_scenarios()}
        picked = []
        for name in args.scenario:
            if name not in catalog:
                raise ConfigError(f"unknown builtin scenario {name!r}")
            picked.append(catalog[name])
        config.scenarios = picked
    if args.mt_sizes:
        config.mt_sizes = tuple(args.mt_sizes)
    if args.reps is not None:
        config.n_sim = args.reps
    if args.seed is not None:
        config.seed = args.seed
    if args.methods:
        config.methods = tuple(m for m in args.methods.split(",") if m)
    if args.threads is not None:
        config.workers = args.threads
    config.validate()
    return config


def _cmd_simulate(args) -> int:
    config = _load_config(args)
    report = harness.run_study(config)
    paths = harness.emit_report(report, args.out)
    for name in sorted(paths):
        print(f"{name}: {paths[name]}")
    worst = max(report.failure_fractions().values(), default=0.0)
    if worst > config.max_failure_fraction:
        print(f"warning: failure fraction {worst:.2f} exceeds "
              f"{config.max_failure_fraction:.2f}", file=sys.stderr)
        return EXIT_PARTIAL_FAILURE
    return EXIT_OK


def _cmd_truth(args) -> int:
    catalog = {s.name: s for s in harness.builtin_scenarios()}
    if args.scenario not in catalog:
        raise ConfigError(f"unknown builtin scenario {args.scenario!r}")
    scenario = catalog[args.scenario]
    rng = np.random.default_rng(np.random.SeedSequence(args.seed, spawn_key=(1, 0)))
    result = truthoracle.true_marginal_loghr(scenario, reps=args.reps, rng=rng)
    print(f"scenario={result.scenario} theta0={result.theta0:.6f} "
          f"reps={result.reps} mcse={result.mcse:.6f}")
    if args.out:
        truthoracle.save_truth_cache([result], args.out)
    return EXIT_OK


def _cmd_report(args) -> int:
    import os

    path = os.path.join(args.in_dir, "summary.csv")
    if not os.path.exists(path):
        raise ConfigError(f"no summary.csv under {args.in_dir}")
    rows = metrics.read_summary_csv(path)
    if args.format == "csv":
        with open(path, "r", encoding="utf-8") as fh:
            sys.stdout.write(fh.read())
    else:
        sys.stdout.write(harness.format_report_table(rows))
    return EXIT_OK


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "simulate":
            return _cmd_simulate(args)
        if args.command == "truth":
            return _cmd_truth(args)
        return _cmd_report(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except HybridControlError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
