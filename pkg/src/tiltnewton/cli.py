"""Command-line entry point.

    tiltnewton run <config.json> [--outdir DIR] [--seed N]
    tiltnewton probe <config.json> [--seed N]
    tiltnewton compare-sqp <config.json>

Exit status is 0 when every run produced a classifiable status (failing to
converge counts as classifiable), 1 if any run raised, and 2 for an invalid
config.
"""

from __future__ import annotations

import argparse
import json
import sys

from .exceptions import ConfigInvalid, TiltNewtonError
from .experiment import (
    compare_sqp_subproblems,
    dumps_report,
    load_config,
    report_ok,
    run_experiment,
    run_probes,
)
from .problems import load_problem, problem_from_dict

__all__ = ["main", "build_parser"]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tiltnewton", description="Generalized Newton experiments on nonsmooth problems.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run all configured variants and probes")
    run.add_argument("config")
    run.add_argument("--outdir", help="output directory (overrides the config)")
    run.add_argument("--seed", type=int, help="probe seed (overrides the config)")

    probe = sub.add_parser("probe", help="run only the configured probes and print them")
    probe.add_argument("config")
    probe.add_argument("--seed", type=int)

    cmp_ = sub.add_parser("compare-sqp", help="print SQP and reduced Newton subproblems")
    cmp_.add_argument("config")
    return parser


def _summary(report: dict) -> str:
    lines = []
    for run in report["runs"]:
        rates = run.get("rates") or {}
        verdict = rates.get("superlinear_verdict")
        lines.append(
            f"{run['label']:<22} start {run['start_index']}: {run['status']:<16} "
            f"iters={run['iterations']} grad={run['final_grad_norm']} "
            f"superlinear={verdict}" + (" oscillating" if run.get("oscillating") else ""))
    for p in report["probes"]:
        lines.append(f"probe {p['index']} ({p['type']}): {p['status']}")
    return "\n".join(lines)


def _instance(cfg):
    return problem_from_dict(cfg["problem"]) if "problem" in cfg else load_problem(cfg["problem_file"])


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.command == "run":
            report = run_experiment(cfg, outdir=args.outdir, seed=args.seed)
            print(_summary(report))
            return 0 if report_ok(report) else 1
        if args.command == "probe":
            entries, _ = run_probes(cfg, args.seed)
            sys.stdout.write(dumps_report({"probes": entries}))
            return 0 if all(e["status"] != "Error" for e in entries) else 1
        if "compare_sqp" not in cfg:
            raise ConfigInvalid("config field compare_sqp: required for compare-sqp")
        c = cfg["compare_sqp"]
        try:
            record = compare_sqp_subproblems(_instance(cfg), c["x"], c.get("lambda"), c.get("r"))
        except TiltNewtonError as exc:
            print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
            return 1
        print(json.dumps(record, indent=2, sort_keys=True))
        return 0
    except ConfigInvalid as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
