"""Command line interface for the benchmark harness.

Subcommands:

* ``run``: execute a plan (the built-in desk-scale plan when no file is
  given) and write traces plus a summary.
* ``verify``: recheck the stored traces against the update laws and
  bookkeeping invariants.
* ``summarize``: rebuild and print the summary from stored traces.

Exit codes: 0 on success, 1 for validation problems (bad plan, bad
flags, failed verification), 2 for runtime failures during solver runs.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from .bench import (
    BenchmarkPlan,
    SOLVERS,
    SUMMARY_COLUMNS,
    default_plan,
    determinism_digest,
    load_plan,
    run_plan,
    summarize_traces,
    verify_traces,
    write_summary,
)
from .errors import PlanError


def _apply_overrides(plan: BenchmarkPlan, pairs: list[str]) -> BenchmarkPlan:
    fields = {f.name: f for f in dataclasses.fields(BenchmarkPlan)}
    for pair in pairs:
        if "=" not in pair:
            raise PlanError(f"--set expects key=value, got {pair!r}")
        key, _, value = pair.partition("=")
        key = key.strip()
        if key not in fields or key in ("cases", "solvers"):
            raise PlanError(f"--set cannot override {key!r}")
        kind = fields[key].type
        try:
            if kind is int or kind == "int":
                setattr(plan, key, int(value))
            else:
                setattr(plan, key, float(value))
        except ValueError as exc:
            raise PlanError(f"bad value for {key}: {exc}") from exc
    return plan


def _format_rows(rows) -> str:
    lines = [",".join(SUMMARY_COLUMNS)]
    for row in rows:
        values = dataclasses.asdict(row)
        lines.append(
            ",".join(
                repr(float(values[c])) if isinstance(values[c], float) else str(values[c])
                for c in SUMMARY_COLUMNS
            )
        )
    return "\n".join(lines)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="riemarc",
        description="Cubic-regularization benchmark harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a benchmark plan")
    p_run.add_argument("--plan", type=Path, default=None, help="plan file")
    p_run.add_argument("--out", type=Path, required=True, help="output directory")
    p_run.add_argument("--seed", type=int, default=None, help="master seed override")
    p_run.add_argument(
        "--solvers",
        type=str,
        default=None,
        help=f"comma-separated subset of {','.join(SOLVERS)}",
    )
    p_run.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override a plan parameter, repeatable",
    )

    p_verify = sub.add_parser("verify", help="recheck stored traces")
    p_verify.add_argument("traces", type=Path, help="directory of trace files")

    p_summ = sub.add_parser("summarize", help="rebuild the summary from traces")
    p_summ.add_argument("traces", type=Path, help="directory of trace files")
    p_summ.add_argument("--out", type=Path, default=None, help="write CSV here")

    args = parser.parse_args(argv)

    try:
        if args.command == "run":
            plan = default_plan() if args.plan is None else load_plan(args.plan)
            if args.seed is not None:
                plan.master_seed = args.seed
            if args.solvers is not None:
                plan.solvers = [s for s in args.solvers.split(",") if s]
            _apply_overrides(plan, args.overrides)
            plan.validate()
            report = run_plan(plan, args.out)
            print(_format_rows(report.rows))
            print(f"digest {determinism_digest(args.out)}")
            if report.failures:
                for failure in report.failures:
                    print(f"failure: {failure}", file=sys.stderr)
                return 2
            return 0

        if args.command == "verify":
            violations = verify_traces(args.traces)
            if violations:
                for v in violations:
                    print(f"violation: {v}", file=sys.stderr)
                return 1
            print(f"ok, digest {determinism_digest(args.traces)}")
            return 0

        if args.command == "summarize":
            rows = summarize_traces(args.traces)
            text = _format_rows(rows)
            print(text)
            if args.out is not None:
                write_summary(rows, args.out)
            return 0
    except (PlanError, FileNotFoundError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    parser.error("unknown command")
    return 1


if __name__ == "__main__":
    sys.exit(main())
