"""Command line entry point: ``python -m outcome_rl <command>``.

Exit codes: 0 success, 1 invalid input, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .classes import QClass, greedy_policy
from .coverability import coverability_prime, coverability_report
from .harness import ConfigError, ExperimentConfig, run_experiment, separation_experiment, validate
from .mdp import TabularMdp

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


def _load_config(path: str) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"<file>: {exc}") from None
    return ExperimentConfig.from_json(text)


def cmd_run(args) -> int:
    cfg = _load_config(args.config)
    report = run_experiment(cfg)
    print(report.to_json())
    return EXIT_OK


def cmd_validate(args) -> int:
    validate(_load_config(args.config))
    print("ok")
    return EXIT_OK


def cmd_coverability(args) -> int:
    try:
        mdp = TabularMdp.from_json(Path(args.mdp).read_text())
        doc = json.loads(Path(args.classes).read_text())
        members = doc["q_class"] if isinstance(doc, dict) and "q_class" in doc else doc
        F = QClass.from_json(json.dumps(members))
    except (OSError, KeyError, ValueError, TypeError) as exc:
        raise ConfigError(f"<input>: {exc}") from None
    if F.shape != mdp.shape:
        raise ConfigError("classes: table shape does not match the MDP")
    policies = [greedy_policy(f) for f in F]
    out = coverability_report(mdp, policies).to_dict()
    out["coverability_prime"] = coverability_prime(mdp, policies)
    out["num_policies"] = len(policies)
    print(json.dumps(out, indent=2))
    return EXIT_OK


def cmd_separation(args) -> int:
    if args.d < 1 or not 0 < args.eps < 1 or args.seeds < 1:
        raise ConfigError("separation: need d >= 1, 0 < eps < 1 and seeds >= 1")
    process, outcome = separation_experiment(
        d=args.d, epsilon=args.eps, budget=args.budget, seeds=range(args.seeds), max_n=args.max_n
    )
    print(json.dumps({"process": process.to_dict(), "outcome": outcome.to_dict()}, indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="outcome_rl")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run an experiment config")
    p.add_argument("config")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("validate", help="check an experiment config")
    p.add_argument("config")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("coverability", help="coverability of the greedy policies of a Q-class")
    p.add_argument("mdp")
    p.add_argument("classes")
    p.set_defaults(func=cmd_coverability)

    p = sub.add_parser("separation", help="process vs outcome feedback on the ReLU family")
    p.add_argument("--d", type=int, default=6)
    p.add_argument("--eps", type=float, default=1.0 / 3.0)
    p.add_argument("--budget", type=int, default=None)
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--max-n", type=int, default=32)
    p.set_defaults(func=cmd_separation)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # surfaced as a runtime failure
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
