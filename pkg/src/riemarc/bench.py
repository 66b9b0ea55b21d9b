"""Benchmark harness: plan files, batch runs, trace verification and
summaries.

A plan is a small text file of ``key = value`` lines plus one ``case``
line per problem size:

    master_seed = 7
    repetitions = 3
    solvers = racr sracr ssracr ssrtr
    case 500 5 5
    case 2015 5 5

Each (case, repetition) pair generates one joint-diagonalization
instance shared by every solver, so solvers are compared on identical
data. Every run writes a trace CSV plus a sidecar ``.meta.json`` with
its configuration and outcome; ``summary.csv`` aggregates per (case,
solver). Traces are deterministic for a fixed plan and master seed up
to the wall-time column, which the content digest therefore excludes.
"""

from __future__ import annotations

import hashlib
import json
import statistics
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .arc import Outcome, RunTrace, SolverConfig, StopRule, write_trace_csv
from .errors import PlanError
from .jointdiag import JointDiagObjective, generate_instance
from .oracles import OracleMode
from .trust_region import TrustRegionConfig, run_trust_region
from . import arc

SOLVERS = ("racr", "sracr", "ssracr", "ssrtr")

_PLAN_FLOAT_KEYS = {
    "noise",
    "sigma0",
    "delta0",
    "rho_threshold",
    "gamma",
    "tau",
    "grad_frac",
    "hess_frac",
}
_PLAN_INT_KEYS = {"master_seed", "repetitions", "max_iters", "refine_steps"}

SUMMARY_COLUMNS = (
    "case",
    "solver",
    "reps",
    "iters_mean",
    "iters_median",
    "time_s_mean",
    "success_rate",
    "grad_evals_total",
    "hess_evals_total",
)


@dataclass
class BenchmarkPlan:
    cases: list[tuple[int, int, int]] = field(default_factory=list)
    solvers: list[str] = field(default_factory=lambda: list(SOLVERS))
    repetitions: int = 3
    master_seed: int = 7
    noise: float = 1e-3
    sigma0: float = 1e-3
    delta0: float = 1.0
    rho_threshold: float = 0.9
    gamma: float = 2.0
    tau: float = 1e-3
    max_iters: int = 2000
    grad_frac: float = 0.25
    hess_frac: float = 0.025
    refine_steps: int = 0

    def validate(self) -> None:
        if not self.cases:
            raise PlanError("plan has no cases")
        for n, d, r in self.cases:
            if n < 1 or d < 1 or not 1 <= r <= d:
                raise PlanError(f"invalid case (n={n}, d={d}, r={r})")
        if not self.solvers:
            raise PlanError("plan has no solvers")
        for s in self.solvers:
            if s not in SOLVERS:
                raise PlanError(f"unknown solver {s!r}, expected one of {SOLVERS}")
        if self.repetitions < 1:
            raise PlanError("repetitions must be at least 1")
        if not 0.0 < self.grad_frac <= 1.0 or not 0.0 < self.hess_frac <= 1.0:
            raise PlanError("sample fractions must lie in (0, 1]")
        if self.max_iters < 1:
            raise PlanError("max_iters must be at least 1")


def default_plan() -> BenchmarkPlan:
    """Desk-scale default: three small cases, three repetitions each."""
    return BenchmarkPlan(cases=[(500, 5, 5), (500, 10, 10), (2015, 5, 5)])


def parse_plan(text: str) -> BenchmarkPlan:
    plan = BenchmarkPlan()
    plan.cases = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("case"):
            parts = line.split()
            if len(parts) != 4:
                raise PlanError(f"line {lineno}: case needs three integers")
            try:
                n, d, r = (int(p) for p in parts[1:])
            except ValueError as exc:
                raise PlanError(f"line {lineno}: {exc}") from exc
            plan.cases.append((n, d, r))
            continue
        if "=" not in line:
            raise PlanError(f"line {lineno}: expected 'key = value' or 'case n d r'")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key == "solvers":
            plan.solvers = [s for s in value.replace(",", " ").split() if s]
        elif key in _PLAN_INT_KEYS:
            try:
                setattr(plan, key, int(value))
            except ValueError as exc:
                raise PlanError(f"line {lineno}: {exc}") from exc
        elif key in _PLAN_FLOAT_KEYS:
            try:
                setattr(plan, key, float(value))
            except ValueError as exc:
                raise PlanError(f"line {lineno}: {exc}") from exc
        else:
            raise PlanError(f"line {lineno}: unknown key {key!r}")
    plan.validate()
    return plan


def load_plan(path) -> BenchmarkPlan:
    return parse_plan(Path(path).read_text(encoding="utf-8"))


def _derived_seed(parts: list[int]) -> int:
    return int(np.random.SeedSequence(parts).generate_state(1)[0])


def sample_sizes(plan: BenchmarkPlan, n: int) -> tuple[int, int]:
    return max(1, int(plan.grad_frac * n)), max(1, int(plan.hess_frac * n))


def _case_id(case: tuple[int, int, int]) -> str:
    return f"case{case[0]}x{case[1]}x{case[2]}"


def run_name(case: tuple[int, int, int], solver: str, rep: int) -> str:
    return f"{_case_id(case)}_rep{rep}_{solver}"


def _solver_trace(
    plan: BenchmarkPlan,
    solver: str,
    objective: JointDiagObjective,
    x0,
    run_seed: int,
) -> RunTrace:
    n = objective.n
    grad_size, hess_size = sample_sizes(plan, n)
    if solver == "ssrtr":
        cfg = TrustRegionConfig(
            rho_threshold=plan.rho_threshold,
            gamma=plan.gamma,
            delta0=plan.delta0,
            mode=OracleMode.SUBSAMPLED_BOTH,
            grad_sample_size=grad_size,
            hess_sample_size=hess_size,
            seed=run_seed,
            stop_rule=StopRule.GRAD_SQUARED,
            tau=plan.tau,
            max_iters=plan.max_iters,
        )
        return run_trust_region(objective, x0, cfg)
    base = SolverConfig.for_variant(
        solver,
        rho_threshold=plan.rho_threshold,
        gamma=plan.gamma,
        sigma0=plan.sigma0,
        seed=run_seed,
        stop_rule=StopRule.GRAD_SQUARED,
        tau=plan.tau,
        max_iters=plan.max_iters,
        refine_steps=plan.refine_steps,
    )
    if base.mode is OracleMode.SUBSAMPLED_BOTH:
        cfg = replace(base, grad_sample_size=grad_size, hess_sample_size=hess_size)
    elif base.mode is OracleMode.SUBSAMPLED_HESSIAN:
        cfg = replace(base, hess_sample_size=hess_size)
    else:
        cfg = base
    return arc.run(objective, x0, cfg)


def _meta_for_run(
    plan: BenchmarkPlan,
    case: tuple[int, int, int],
    solver: str,
    rep: int,
    instance_seed: int,
    run_seed: int,
    trace: RunTrace,
    wall_s: float,
) -> dict:
    n, d, r = case
    grad_size, hess_size = sample_sizes(plan, n)
    meta = {
        "case": {"n": n, "d": d, "r": r},
        "solver": solver,
        "rep": rep,
        "instance_seed": instance_seed,
        "run_seed": run_seed,
        "noise": plan.noise,
        "gamma": plan.gamma,
        "rho_threshold": plan.rho_threshold,
        "tau": plan.tau,
        "stop_rule": "grad_squared",
        "max_iters": plan.max_iters,
        "outcome": trace.outcome.value,
        "iterations": trace.iterations,
        "final_f": trace.final_f,
        "wall_s": wall_s,
        "grad_evals": trace.grad_evals,
        "hess_evals": trace.hess_evals,
    }
    if solver == "ssrtr":
        meta["delta0"] = plan.delta0
        meta["delta_max"] = 10.0 * plan.delta0
        meta["radius_column"] = "delta"
    else:
        meta["sigma0"] = plan.sigma0
        meta["sigma_min"] = arc.SIGMA_MIN
        meta["radius_column"] = "sigma"
        meta["refine_steps"] = plan.refine_steps
    if solver in ("ssracr", "ssrtr"):
        meta["grad_sample_size"] = grad_size
    else:
        meta["grad_sample_size"] = n
    if solver == "racr":
        meta["hess_sample_size"] = n
    else:
        meta["hess_sample_size"] = hess_size
    return meta


@dataclass
class SummaryRow:
    case: str
    solver: str
    reps: int
    iters_mean: float
    iters_median: float
    time_s_mean: float
    success_rate: float
    grad_evals_total: int
    hess_evals_total: int


@dataclass
class PlanReport:
    rows: list[SummaryRow]
    failures: list[str]
    out_dir: Path


def run_plan(plan: BenchmarkPlan, out_dir) -> PlanReport:
    """Execute every (case, repetition, solver) run and write artifacts."""
    plan.validate()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    failures: list[str] = []

    for ci, case in enumerate(plan.cases):
        n, d, r = case
        for rep in range(plan.repetitions):
            instance_seed = _derived_seed([plan.master_seed, ci, rep, 11])
            instance = generate_instance(n, d, r, seed=instance_seed, noise=plan.noise)
            objective = JointDiagObjective(instance)
            x0 = objective.manifold.random_point(
                np.random.default_rng([plan.master_seed, ci, rep, 13])
            )
            for si, solver in enumerate(plan.solvers):
                run_seed = _derived_seed([plan.master_seed, ci, rep, 17, si])
                name = run_name(case, solver, rep)
                t0 = time.perf_counter()
                try:
                    trace = _solver_trace(plan, solver, objective, x0, run_seed)
                except Exception as exc:  # noqa: BLE001
                    failures.append(f"{name}: {type(exc).__name__}: {exc}")
                    continue
                wall_s = time.perf_counter() - t0
                if trace.outcome is Outcome.NUMERICAL_FAILURE:
                    failures.append(f"{name}: non-finite objective during run")
                write_trace_csv(
                    trace,
                    out / f"{name}.csv",
                    sigma_name="delta" if solver == "ssrtr" else "sigma",
                )
                meta = _meta_for_run(
                    plan, case, solver, rep, instance_seed, run_seed, trace, wall_s
                )
                (out / f"{name}.meta.json").write_text(
                    json.dumps(meta, indent=1, sort_keys=True) + "\n", encoding="utf-8"
                )

    rows = summarize_traces(out)
    write_summary(rows, out / "summary.csv")
    return PlanReport(rows=rows, failures=failures, out_dir=out)


def _read_trace(path: Path) -> tuple[list[str], list[list[str]]]:
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines:
        raise PlanError(f"{path.name}: empty trace file")
    header = lines[0].split(",")
    rows = [line.split(",") for line in lines[1:] if line]
    return header, rows


def _meta_path(trace_path: Path) -> Path:
    return trace_path.with_suffix(".meta.json")


def iter_run_files(directory) -> list[Path]:
    directory = Path(directory)
    return sorted(p for p in directory.glob("*.csv") if p.name != "summary.csv")


def summarize_traces(directory) -> list[SummaryRow]:
    """Rebuild summary rows from the stored traces and sidecars."""
    groups: dict[tuple[str, str], list[dict]] = {}
    for trace_path in iter_run_files(directory):
        meta = json.loads(_meta_path(trace_path).read_text(encoding="utf-8"))
        header, rows = _read_trace(trace_path)
        idx = {name: i for i, name in enumerate(header)}
        if rows:
            last = rows[-1]
            grad_total = int(last[idx["grad_evals"]])
            hess_total = int(last[idx["hess_evals"]])
        else:
            grad_total = 0
            hess_total = 0
        case = meta["case"]
        key = (_case_id((case["n"], case["d"], case["r"])), meta["solver"])
        groups.setdefault(key, []).append(
            {
                "iters": len(rows),
                "time_s": sum(float(row[idx["millis"]]) for row in rows) / 1e3,
                "success": meta["outcome"] == Outcome.OPTIMALITY_REACHED.value,
                "grad": grad_total,
                "hess": hess_total,
            }
        )

    rows_out: list[SummaryRow] = []
    for (case_id, solver), runs in sorted(groups.items()):
        rows_out.append(
            SummaryRow(
                case=case_id,
                solver=solver,
                reps=len(runs),
                iters_mean=statistics.fmean(r["iters"] for r in runs),
                iters_median=float(statistics.median(r["iters"] for r in runs)),
                time_s_mean=statistics.fmean(r["time_s"] for r in runs),
                success_rate=statistics.fmean(
                    1.0 if r["success"] else 0.0 for r in runs
                ),
                grad_evals_total=sum(r["grad"] for r in runs),
                hess_evals_total=sum(r["hess"] for r in runs),
            )
        )
    return rows_out


def write_summary(rows: list[SummaryRow], path) -> None:
    with open(path, "w", encoding="utf-8") as stream:
        stream.write(",".join(SUMMARY_COLUMNS) + "\n")
        for row in rows:
            values = asdict(row)
            out = []
            for col in SUMMARY_COLUMNS:
                v = values[col]
                out.append(repr(float(v)) if isinstance(v, float) else str(v))
            stream.write(",".join(out) + "\n")


# -- verification ---------------------------------------------------------


def _check_recurrence(
    name: str,
    rows: list[list[str]],
    idx: dict[str, int],
    meta: dict,
    violations: list[str],
) -> None:
    gamma = float(meta["gamma"])
    is_tr = meta.get("radius_column") == "delta"
    radius_col = "delta" if is_tr else "sigma"
    col = idx[radius_col]
    values = [float(row[col]) for row in rows]
    succ = [row[idx["success"]] == "1" for row in rows]
    if rows:
        expected0 = float(meta["delta0"] if is_tr else meta["sigma0"])
        if values[0] != expected0:
            violations.append(
                f"{name}: row 0 {radius_col} is {values[0]!r}, expected {expected0!r}"
            )
    for k in range(len(rows) - 1):
        if is_tr:
            cap = float(meta["delta_max"])
            expected = min(gamma * values[k], cap) if succ[k] else values[k] / gamma
        else:
            floor = float(meta["sigma_min"])
            expected = (
                max(values[k] / gamma, floor) if succ[k] else gamma * values[k]
            )
        if values[k + 1] != expected:
            violations.append(
                f"{name}: row {k + 1} {radius_col} is {values[k + 1]!r}, "
                f"expected {expected!r}"
            )


def verify_traces(directory) -> list[str]:
    """Recompute every checkable law from the stored artifacts. Returns a
    list of violation messages, empty when everything holds."""
    violations: list[str] = []
    paths = iter_run_files(directory)
    if not paths:
        violations.append("no trace files found")
        return violations

    for trace_path in paths:
        name = trace_path.name
        meta_path = _meta_path(trace_path)
        if not meta_path.exists():
            violations.append(f"{name}: missing sidecar {meta_path.name}")
            continue
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
        try:
            header, rows = _read_trace(trace_path)
        except PlanError as exc:
            violations.append(str(exc))
            continue

        radius_name = meta.get("radius_column", "sigma")
        expected_header = [
            c if c != "sigma" else radius_name for c in arc.TRACE_COLUMNS
        ]
        if header != expected_header:
            violations.append(f"{name}: unexpected columns {header}")
            continue
        idx = {name_: i for i, name_ in enumerate(header)}

        if [int(row[idx["k"]]) for row in rows] != list(range(len(rows))):
            violations.append(f"{name}: iteration indices are not 0..{len(rows) - 1}")
        if meta.get("iterations") != len(rows):
            violations.append(
                f"{name}: sidecar says {meta.get('iterations')} iterations, "
                f"trace has {len(rows)}"
            )

        _check_recurrence(name, rows, idx, meta, violations)

        # Objective bookkeeping: rejected iterations keep f, accepted ones
        # never increase it.
        for k in range(len(rows) - 1):
            f_k = float(rows[k][idx["f"]])
            f_next = float(rows[k + 1][idx["f"]])
            if rows[k][idx["success"]] == "1":
                if f_next > f_k:
                    violations.append(f"{name}: f increased after accepted row {k}")
            elif f_next != f_k:
                violations.append(f"{name}: f changed after rejected row {k}")

        # Acceptance flags must match the stored ratio.
        rho_th = float(meta["rho_threshold"])
        for k, row in enumerate(rows):
            flag = row[idx["success"]] == "1"
            if flag != (float(row[idx["rho"]]) >= rho_th):
                violations.append(f"{name}: success flag contradicts rho at row {k}")

        # Oracle counters: cumulative, one gradient batch per iteration,
        # whole Hessian batches.
        g_size = int(meta["grad_sample_size"])
        h_size = int(meta["hess_sample_size"])
        prev_g, prev_h = 0, 0
        for k, row in enumerate(rows):
            g_c = int(row[idx["grad_evals"]])
            h_c = int(row[idx["hess_evals"]])
            if g_c - prev_g != g_size:
                violations.append(
                    f"{name}: gradient counter step {g_c - prev_g} at row {k}, "
                    f"expected {g_size}"
                )
            dh = h_c - prev_h
            if dh < h_size or dh % h_size != 0:
                violations.append(
                    f"{name}: Hessian counter step {dh} at row {k} is not a "
                    f"positive multiple of {h_size}"
                )
            prev_g, prev_h = g_c, h_c

    return violations


# -- determinism digest -----------------------------------------------------


def _strip_columns(header: list[str], rows: list[list[str]], drop: set[str]):
    keep = [i for i, name in enumerate(header) if name not in drop]
    return [header[i] for i in keep], [[row[i] for i in keep] for row in rows]


def determinism_digest(directory) -> str:
    """Hash of all trace and summary content excluding wall-time columns."""
    digest = hashlib.sha256()
    for trace_path in iter_run_files(directory):
        header, rows = _read_trace(trace_path)
        header, rows = _strip_columns(header, rows, {"millis"})
        digest.update(trace_path.name.encode())
        digest.update("\n".join(",".join(r) for r in [header, *rows]).encode())
    summary = Path(directory) / "summary.csv"
    if summary.exists():
        header, rows = _read_trace(summary)
        header, rows = _strip_columns(header, rows, {"time_s_mean"})
        digest.update("\n".join(",".join(r) for r in [header, *rows]).encode())
    return digest.hexdigest()
