"""Command line entry point ``hybrid-mor``."""

import argparse
import json
import logging
import sys

from ..errors import ValidationError
from .config import builtin_scenario_path, load_scenario
from .runner import EXIT_VALIDATION, TASK_FUNCTIONS, run


def _parser():
    p = argparse.ArgumentParser(prog="hybrid-mor", description="Moment matching for linear hybrid systems.")
    p.add_argument("-v", "--verbose", action="store_true", help="log task progress")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run the tasks of a scenario file")
    r.add_argument("scenario", help="YAML scenario file")
    r.add_argument("--out", default="hybrid_mor_out", help="output directory (default: %(default)s)")
    r.add_argument("--task", action="append", choices=sorted(TASK_FUNCTIONS), help="task to run (repeatable)")
    r.add_argument("--seed", type=int, help="override the scenario seed")
    r.add_argument("--tol-attract", type=float, help="override the attractivity tolerance")

    v = sub.add_parser("validate", help="load and check a scenario without running it")
    v.add_argument("scenario")

    e = sub.add_parser("paper-example", help="run the built-in six-state example")
    e.add_argument("--out", default="hybrid_mor_out/paper_example")
    e.add_argument("--seed", type=int)
    return p


def _summary(report):
    lines = [f"scenario {report.scenario} (seed {report.seed})"]
    for name, res in report.tasks.items():
        extra = f"  {res.error}" if res.error else ""
        lines.append(f"  {name:22s} {res.status:20s} {res.runtime:7.2f}s{extra}")
    lines.append(f"exit code {report.exit_code}")
    return "\n".join(lines)


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    overrides = {
        "seed": getattr(args, "seed", None),
        "tol_attract": getattr(args, "tol_attract", None),
        "tasks": getattr(args, "task", None),
    }
    path = builtin_scenario_path() if args.command == "paper-example" else args.scenario
    try:
        scenario = load_scenario(path, overrides)
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION

    if args.command == "validate":
        print(json.dumps({"scenario": scenario.name, "tasks": scenario.tasks, "checks": scenario.checks}, indent=2))
        return 0

    report = run(scenario, args.out)
    print(_summary(report))
    print(f"report written to {args.out}/report.json")
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
