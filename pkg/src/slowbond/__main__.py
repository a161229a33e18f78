"""Command line: ``python -m slowbond run <scenario> ...`` and ``python -m slowbond selftest``.

Exit codes: 0 all checks passed, 1 a check failed, 2 configuration or I/O error.
"""
from __future__ import annotations

import argparse
import sys

from .exceptions import ConfigError
from .experiments import SCENARIOS, load_config, run_scenario, write_outcome

SELFTEST_SCENARIOS = ("basis-selftest", "ratefn", "moments")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="slowbond", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run one scenario and write its results")
    run.add_argument("scenario", choices=SCENARIOS)
    run.add_argument("--config", help="flat key = value configuration file")
    run.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override one key")
    run.add_argument("--out", help="output directory")
    run.add_argument("--seed", type=int, help="master seed")
    run.add_argument("--replicas", type=int)
    run.add_argument("--threads", type=int)
    run.add_argument("--format", choices=("csv", "jsonl", "both"))
    self_test = sub.add_parser("selftest", help="run the deterministic suites")
    self_test.add_argument("--out", help="also write results here")
    return parser


def _report(outcome, stream):
    for rec in outcome.records:
        if rec["passed"] is None:
            continue
        flag = "PASS" if rec["passed"] else "FAIL"
        print(f"{flag} {rec['scenario']}: {rec['metric']} = {rec['value']!r}"
              + (f" (tolerance {rec['tolerance']!r})" if rec["tolerance"] is not None else ""), file=stream)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            cfg = load_config(args.scenario, args.config, args.set, out=args.out, seed=args.seed,
                              replicas=args.replicas, threads=args.threads, format=args.format)
            configs = [cfg]
        else:
            configs = [load_config(name, out=args.out) for name in SELFTEST_SCENARIOS]
        status = 0
        for cfg in configs:
            outcome = run_scenario(cfg)
            _report(outcome, sys.stdout)
            if args.command == "run" or args.out is not None:
                write_outcome(outcome, cfg)
            status = max(status, outcome.status)
        return status
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
