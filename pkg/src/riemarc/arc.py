"""Adaptive cubic-regularization driver on a manifold.

Each outer iteration fixes the oracle samples, forms the inexact
gradient and Hessian operator, tests termination, approximately solves
the cubic model, and accepts or rejects the trial point by the ratio

    rho = (f(x) - f(retract(x, eta))) / (-m(eta))

computed with the exact full objective in every oracle mode. Acceptance
(``rho >= rho_threshold``) moves the iterate and divides the
regularization weight sigma by gamma; rejection keeps the iterate and
multiplies sigma by gamma. Sigma is clamped below at ``SIGMA_MIN``.

Three standard variants are named after their oracle modes: ``racr``
(exact gradient and Hessian), ``sracr`` (exact gradient, sub-sampled
Hessian) and ``ssracr`` (both sub-sampled).
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import partial
from typing import Iterable, TextIO

import numpy as np

from .errors import ContractError, MissingEigenEstimateError
from .manifolds import Point
from .objectives import SeparableObjective
from .oracles import OracleBundle, OracleMode
from .subproblem import (
    CubicModel,
    MinEigResult,
    SubsolverOptions,
    min_eig_estimate,
    solve_subproblem,
)

SIGMA_MIN = 1e-12

# Seed stream purposes 0 and 1 belong to the oracle bundle.
_PURPOSE_LANCZOS = 2

TRACE_COLUMNS = (
    "k",
    "f",
    "grad_norm",
    "sigma",
    "model_val",
    "rho",
    "success",
    "lambda_min",
    "grad_evals",
    "hess_evals",
    "millis",
)


class StopRule(Enum):
    """Outer termination test.

    ``OPTIMALITY`` stops when ``||G_k|| <= eps_g`` and the estimated
    smallest Hessian eigenvalue is at least ``-eps_h``. ``GRAD_SQUARED``
    stops when ``||G_k||^2 <= tau``, matching the benchmark protocol.
    """

    OPTIMALITY = "optimality"
    GRAD_SQUARED = "grad_squared"


class EigPolicy(Enum):
    """When to run the Lanczos curvature estimate.

    ``ON_SMALL_GRADIENT`` runs it only once the gradient norm falls to
    the level where the second-order test or an eigen step could matter.
    ``EVERY_ITERATION`` runs it unconditionally.
    """

    ON_SMALL_GRADIENT = "on_small_gradient"
    EVERY_ITERATION = "every_iteration"


class Outcome(Enum):
    OPTIMALITY_REACHED = "optimality_reached"
    MAX_ITERS = "max_iters"
    SUBSOLVER_FAILURE = "subsolver_failure"
    NUMERICAL_FAILURE = "numerical_failure"


_VARIANT_MODES = {
    "racr": OracleMode.EXACT,
    "sracr": OracleMode.SUBSAMPLED_HESSIAN,
    "ssracr": OracleMode.SUBSAMPLED_BOTH,
}


@dataclass
class SolverConfig:
    """Parameters of the cubic-regularization driver."""

    eps_g: float = 1e-2
    eps_h: float = 1e-1
    rho_threshold: float = 0.9
    gamma: float = 2.0
    sigma0: float = 1e-3
    mode: OracleMode = OracleMode.EXACT
    grad_sample_size: int | None = None
    hess_sample_size: int | None = None
    seed: int = 0
    stop_rule: StopRule = StopRule.OPTIMALITY
    tau: float = 1e-3
    eig_policy: EigPolicy = EigPolicy.ON_SMALL_GRADIENT
    lanczos_tol: float = 1e-6
    lanczos_max_iters: int | None = None
    refine_steps: int = 0
    max_iters: int | None = None

    def validate(self) -> None:
        if not 0.0 < self.eps_g < 1.0:
            raise ContractError(f"eps_g must lie in (0, 1), got {self.eps_g}")
        if not 0.0 < self.eps_h < 1.0:
            raise ContractError(f"eps_h must lie in (0, 1), got {self.eps_h}")
        if not 0.0 < self.rho_threshold < 1.0:
            raise ContractError(
                f"rho_threshold must lie in (0, 1), got {self.rho_threshold}"
            )
        if not self.gamma > 1.0:
            raise ContractError(f"gamma must exceed 1, got {self.gamma}")
        if not self.sigma0 > 0.0:
            raise ContractError(f"sigma0 must be positive, got {self.sigma0}")
        if self.tau <= 0.0:
            raise ContractError(f"tau must be positive, got {self.tau}")
        if self.max_iters is not None and self.max_iters < 0:
            raise ContractError("max_iters must be non-negative")

    def iteration_budget(self) -> int:
        """Explicit cap, or ``50 max(eps_g^-2, eps_h^-3)`` capped at 1e6."""
        if self.max_iters is not None:
            return self.max_iters
        budget = 50.0 * max(self.eps_g**-2, self.eps_h**-3)
        return int(min(budget, 1e6))

    @classmethod
    def for_variant(cls, name: str, **kwargs) -> "SolverConfig":
        """Config preset for ``racr``, ``sracr`` or ``ssracr``."""
        key = name.lower()
        if key not in _VARIANT_MODES:
            raise ContractError(
                f"unknown variant {name!r}, expected one of {sorted(_VARIANT_MODES)}"
            )
        return cls(mode=_VARIANT_MODES[key], **kwargs)


@dataclass(frozen=True)
class IterationRecord:
    """One row of a run trace. Counter fields are cumulative."""

    k: int
    f: float
    grad_norm: float
    sigma: float
    model_val: float
    rho: float
    success: bool
    lambda_min: float | None
    grad_evals: int
    hess_evals: int
    millis: float


@dataclass
class RunTrace:
    """Full record of one solver run."""

    records: list[IterationRecord]
    outcome: Outcome
    final_point: Point
    final_f: float
    grad_evals: int
    hess_evals: int
    objective_evals: int
    l_hat: float | None = None
    sigma_clamped_iterations: list[int] = field(default_factory=list)

    @property
    def iterations(self) -> int:
        return len(self.records)

    @property
    def n_success(self) -> int:
        return sum(1 for rec in self.records if rec.success)

    @property
    def n_fail(self) -> int:
        return sum(1 for rec in self.records if not rec.success)


def should_terminate(
    grad_norm: float, lambda_est: float | None, cfg: SolverConfig
) -> bool:
    """Outer stopping test on the current inexact quantities."""
    if cfg.stop_rule is StopRule.GRAD_SQUARED:
        return grad_norm**2 <= cfg.tau
    if grad_norm > cfg.eps_g:
        return False
    if lambda_est is None:
        raise MissingEigenEstimateError(
            "second-order termination test reached without an eigenvalue estimate"
        )
    return lambda_est >= -cfg.eps_h


def _small_gradient_threshold(cfg: SolverConfig) -> float:
    if cfg.stop_rule is StopRule.GRAD_SQUARED:
        return math.sqrt(cfg.tau)
    return cfg.eps_g


def run(objective: SeparableObjective, x0: Point, cfg: SolverConfig) -> RunTrace:
    """Run the driver from ``x0`` until termination or the budget."""
    cfg.validate()
    manifold = objective.manifold
    bundle = OracleBundle(
        objective,
        cfg.mode,
        grad_sample_size=cfg.grad_sample_size,
        hess_sample_size=cfg.hess_sample_size,
        seed=cfg.seed,
    )
    x = manifold.point(x0.data)
    sigma = cfg.sigma0
    f_x = bundle.objective_value(x)
    exact_hessian = cfg.mode is OracleMode.EXACT
    l_hat: float | None = None
    records: list[IterationRecord] = []
    clamped: list[int] = []
    outcome = Outcome.MAX_ITERS
    budget = cfg.iteration_budget()
    small_grad = _small_gradient_threshold(cfg)

    k = 0
    while k < budget:
        t_start = time.perf_counter()
        bundle.begin_iteration(k)
        hvp = partial(bundle.inexact_hvp, x)
        grad = bundle.inexact_gradient(x)
        grad_norm = manifold.norm(grad)

        probe: MinEigResult | None = None
        if cfg.eig_policy is EigPolicy.EVERY_ITERATION or grad_norm <= small_grad:
            probe = min_eig_estimate(
                manifold,
                x,
                hvp,
                tol=cfg.lanczos_tol,
                max_iters=cfg.lanczos_max_iters,
                seed=np.random.default_rng([cfg.seed, k, _PURPOSE_LANCZOS]),
            )

        lambda_est = probe.value if probe is not None else None
        if should_terminate(grad_norm, lambda_est, cfg):
            outcome = Outcome.OPTIMALITY_REACHED
            break

        model = CubicModel(grad, hvp, sigma, x, manifold)
        options = SubsolverOptions(
            probe_curvature=probe is not None,
            lanczos_tol=cfg.lanczos_tol,
            lanczos_max_iters=cfg.lanczos_max_iters,
            refine_steps=cfg.refine_steps,
        )
        result = solve_subproblem(model, options, probe=probe)
        if not result.m_val < -1e-16 * max(1.0, abs(f_x)):
            outcome = Outcome.SUBSOLVER_FAILURE
            break

        x_trial = manifold.retract(x, result.step)
        f_trial = bundle.objective_value(x_trial)
        if not (math.isfinite(f_trial) and math.isfinite(f_x)):
            outcome = Outcome.NUMERICAL_FAILURE
            break
        rho = (f_x - f_trial) / (-result.m_val)
        success = rho >= cfg.rho_threshold

        if exact_hessian and result.step_norm > 0.0:
            # Third-order remainder of the exact quadratic model along the
            # actual trajectory, an empirical Hessian Lipschitz constant.
            remainder = abs(
                f_trial - f_x - result.g_eta - 0.5 * result.h_eta
            )
            sample = 2.0 * remainder / result.step_norm**3
            l_hat = sample if l_hat is None else max(l_hat, sample)

        millis = (time.perf_counter() - t_start) * 1e3
        records.append(
            IterationRecord(
                k=k,
                f=f_x,
                grad_norm=grad_norm,
                sigma=sigma,
                model_val=result.m_val,
                rho=rho,
                success=success,
                lambda_min=lambda_est,
                grad_evals=bundle.counters.grad_components,
                hess_evals=bundle.counters.hess_components,
                millis=millis,
            )
        )

        if success:
            x = x_trial
            f_x = f_trial
            next_sigma = sigma / cfg.gamma
            if next_sigma < SIGMA_MIN:
                next_sigma = SIGMA_MIN
                clamped.append(k)
            sigma = next_sigma
        else:
            sigma = cfg.gamma * sigma
        k += 1

    return RunTrace(
        records=records,
        outcome=outcome,
        final_point=x,
        final_f=f_x,
        grad_evals=bundle.counters.grad_components,
        hess_evals=bundle.counters.hess_components,
        objective_evals=bundle.counters.objective_components,
        l_hat=l_hat,
        sigma_clamped_iterations=clamped,
    )


def _format_value(value: float | int | bool | None) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, int):
        return str(value)
    return repr(float(value))


def write_trace_rows(
    records: Iterable[IterationRecord], stream: TextIO, *, sigma_name: str = "sigma"
) -> None:
    """Write records as CSV with the fixed column order. ``sigma_name``
    lets trust-region traces label the radius column ``delta``."""
    header = [c if c != "sigma" else sigma_name for c in TRACE_COLUMNS]
    stream.write(",".join(header) + "\n")
    for rec in records:
        row = [
            _format_value(rec.k),
            _format_value(rec.f),
            _format_value(rec.grad_norm),
            _format_value(rec.sigma),
            _format_value(rec.model_val),
            _format_value(rec.rho),
            _format_value(rec.success),
            _format_value(rec.lambda_min),
            _format_value(rec.grad_evals),
            _format_value(rec.hess_evals),
            _format_value(rec.millis),
        ]
        stream.write(",".join(row) + "\n")


def write_trace_csv(trace: RunTrace, path, *, sigma_name: str = "sigma") -> None:
    with open(path, "w", encoding="utf-8") as stream:
        write_trace_rows(trace.records, stream, sigma_name=sigma_name)


def clone_config(cfg: SolverConfig, **overrides) -> SolverConfig:
    return replace(cfg, **overrides)
