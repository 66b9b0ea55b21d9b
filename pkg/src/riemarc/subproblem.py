"""Approximate minimization of the cubic-regularized model

    m(eta) = <G, eta> + 0.5 <H[eta], eta> + (sigma/3) ||eta||^3

over the tangent space at the current iterate.

The solver returns the better of two closed-form candidates, optionally
polished by a bounded number of gradient steps on ``m``:

* the Cauchy point ``-alpha* G``, where ``alpha*`` is the unique positive
  root of ``sigma ||G||^3 a^2 + <G, H[G]> a - ||G||^2 = 0`` (the exact
  minimizer of ``m`` along the negative gradient), and
* an eigen step ``beta* s v`` along an estimated direction ``v`` of most
  negative curvature, with ``s`` chosen so the linear term is not
  ascending and ``beta*`` the exact minimizer of ``m`` along ``s v``.

By construction the returned value never exceeds the Cauchy value, and
never exceeds the eigen value when negative curvature was detected. The
curvature estimate comes from Lanczos iteration on the Hessian operator
restricted to the tangent space, with full reorthogonalization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ContractError, ZeroGradientError
from .manifolds import Manifold, Point, Tangent

# Curvature counts as negative only below this relative threshold, so
# roundoff-scale negative Ritz values do not trigger eigen steps.
NEGATIVE_CURVATURE_REL_TOL = 1e-10


@dataclass
class CubicModel:
    """Cubic-regularized local model of the objective at ``base``.

    ``hvp`` must be a linear operator on tangent vectors at ``base``.
    With inexact oracles it is the sub-sampled Hessian fixed for the
    current outer iteration.
    """

    gradient: Tangent
    hvp: Callable[[Tangent], Tangent]
    sigma: float
    base: Point
    manifold: Manifold

    def __post_init__(self) -> None:
        if not (self.sigma > 0.0 and math.isfinite(self.sigma)):
            raise ContractError(f"sigma must be positive and finite, got {self.sigma}")

    def value(self, eta: Tangent) -> float:
        """Evaluate ``m`` at a tangent vector (one Hessian product)."""
        g_eta = self.manifold.inner(self.gradient, eta)
        h_eta = self.manifold.inner(self.hvp(eta), eta)
        nrm = self.manifold.norm(eta)
        return g_eta + 0.5 * h_eta + (self.sigma / 3.0) * nrm**3


def eval_model(model: CubicModel, eta: Tangent) -> float:
    return model.value(eta)


def _positive_quadratic_root(a: float, b: float, c: float) -> float:
    """Positive root of ``a t^2 + b t - c = 0`` with ``a > 0``, ``c > 0``,
    computed in the cancellation-free form."""
    disc = math.sqrt(b * b + 4.0 * a * c)
    if b >= 0.0:
        return 2.0 * c / (b + disc)
    return (disc - b) / (2.0 * a)


def _cauchy_candidate(model: CubicModel) -> tuple[Tangent, float, float, float, float]:
    """Cauchy step with its scalar decomposition.

    Returns ``(eta, m_val, g_eta, h_eta, step_norm)`` where the scalars
    are ``<G, eta>``, ``<H[eta], eta>`` and ``||eta||``, available in
    closed form because the step is a multiple of ``-G``. Costs a single
    Hessian product.
    """
    g = model.gradient
    gnorm = model.manifold.norm(g)
    if gnorm == 0.0:
        raise ZeroGradientError("Cauchy point undefined for a zero gradient")
    ghg = model.manifold.inner(model.hvp(g), g)
    alpha = _positive_quadratic_root(model.sigma * gnorm**3, ghg, gnorm**2)
    eta = model.manifold.tangent(model.base, -alpha * g.data, check=False)
    g_eta = -alpha * gnorm**2
    h_eta = alpha**2 * ghg
    step_norm = alpha * gnorm
    m_val = g_eta + 0.5 * h_eta + (model.sigma / 3.0) * step_norm**3
    return eta, m_val, g_eta, h_eta, step_norm


def cauchy_point(model: CubicModel) -> tuple[Tangent, float]:
    """Exact minimizer of ``m`` along ``-G`` and its model value.

    Uses a single Hessian product. Raises ``ZeroGradientError`` when the
    gradient vanishes, since no gradient direction exists.
    """
    eta, m_val, _, _, _ = _cauchy_candidate(model)
    return eta, m_val


@dataclass
class MinEigResult:
    """Smallest-eigenvalue estimate of the Hessian on the tangent space.

    ``value`` is the Rayleigh quotient of the returned unit vector, so it
    upper-bounds the true smallest eigenvalue. ``op_norm_est`` is the
    largest Ritz value magnitude seen, a lower bound on the operator
    norm used for relative thresholds.
    """

    value: float
    vector: Tangent
    converged: bool
    iterations: int
    op_norm_est: float


def min_eig_estimate(
    manifold: Manifold,
    base: Point,
    hvp: Callable[[Tangent], Tangent],
    *,
    tol: float = 1e-6,
    max_iters: int | None = None,
    seed: int | np.random.Generator = 0,
) -> MinEigResult:
    """Lanczos estimate of the smallest eigenvalue of ``hvp`` restricted
    to the tangent space at ``base``.

    Iterates with full reorthogonalization until the Ritz residual drops
    below ``tol * max(1, |ritz|_max)``, the Krylov space exhausts the
    tangent space (the estimate is then exact up to roundoff), or the
    iteration budget runs out (the result is flagged unconverged).
    """
    dim = manifold.intrinsic_dim
    if dim < 1:
        raise ContractError("tangent space must have dimension >= 1")
    budget = 5 * dim if max_iters is None else int(max_iters)
    if budget < 1:
        raise ContractError("iteration budget must be positive")
    budget = min(budget, dim)

    q0 = manifold.random_tangent(base, seed)
    basis: list[Tangent] = [q0]
    alphas: list[float] = []
    betas: list[float] = []
    converged = False
    theta = 0.0
    ritz_weights: np.ndarray | None = None
    op_norm = 0.0

    for j in range(budget):
        w = hvp(basis[j]).data.copy()
        a_j = float(np.tensordot(basis[j].data, w))
        alphas.append(a_j)
        w -= a_j * basis[j].data
        if j > 0:
            w -= betas[j - 1] * basis[j - 1].data
        # Full reorthogonalization against the whole basis, twice for
        # numerical safety.
        for _ in range(2):
            for q in basis:
                w -= float(np.tensordot(q.data, w)) * q.data
        beta_j = float(np.linalg.norm(w))

        tri = np.diag(alphas)
        if j > 0:
            off = np.array(betas)
            tri += np.diag(off, 1) + np.diag(off, -1)
        evals, evecs = np.linalg.eigh(tri)
        theta = float(evals[0])
        ritz_weights = evecs[:, 0]
        op_norm = max(op_norm, float(np.max(np.abs(evals))))
        residual = beta_j * abs(float(ritz_weights[-1]))

        if residual <= tol * max(1.0, op_norm):
            converged = True
            break
        if beta_j <= 1e-12 * max(1.0, op_norm) or j + 1 == dim:
            # Krylov space is invariant or spans the tangent space.
            converged = True
            break
        betas.append(beta_j)
        basis.append(manifold.tangent(base, w / beta_j, check=False))

    assert ritz_weights is not None
    vec = np.zeros_like(base.data, dtype=float)
    for weight, q in zip(ritz_weights, basis):
        vec += float(weight) * q.data
    nrm = float(np.linalg.norm(vec))
    vec /= nrm
    v = manifold.tangent(base, vec, check=False)
    # Report the exact Rayleigh quotient of the returned vector so the
    # upper-bound guarantee holds regardless of Lanczos state.
    rayleigh = manifold.inner(hvp(v), v)
    return MinEigResult(
        value=rayleigh,
        vector=v,
        converged=converged,
        iterations=len(alphas),
        op_norm_est=max(op_norm, abs(rayleigh)),
    )


def _eigen_candidate(
    model: CubicModel, v: Tangent, curvature: float
) -> tuple[Tangent, float, float, float, float]:
    """Eigen step with its scalar decomposition.

    Returns ``(eta, m_val, g_eta, h_eta, step_norm)``; the scalars come
    for free because the step is a multiple of the unit vector ``v``
    whose Rayleigh quotient is ``curvature``. No Hessian product needed.
    """
    if not curvature < 0.0:
        raise ContractError(f"eigen step needs negative curvature, got {curvature}")
    gv = model.manifold.inner(model.gradient, v)
    s = 1.0 if gv == 0.0 else -math.copysign(1.0, gv)
    lin = s * gv  # <= 0
    beta = _positive_quadratic_root(model.sigma, curvature, -lin)
    eta = model.manifold.tangent(model.base, beta * s * v.data, check=False)
    g_eta = beta * lin
    h_eta = beta**2 * curvature
    m_val = g_eta + 0.5 * h_eta + (model.sigma / 3.0) * beta**3
    return eta, m_val, g_eta, h_eta, beta


def eigen_point(
    model: CubicModel, v: Tangent, curvature: float
) -> tuple[Tangent, float]:
    """Exact minimizer of ``m`` along a negative-curvature direction.

    ``v`` must be unit norm with Rayleigh quotient ``curvature < 0``. The
    step is ``beta* s v`` where ``s`` flips ``v`` against the gradient
    (``+1`` on a perpendicular gradient) and ``beta*`` is the positive
    root of ``sigma b^2 + curvature b + s <G, v> = 0``, which satisfies
    ``beta* >= |curvature| / sigma``.
    """
    eta, m_val, _, _, _ = _eigen_candidate(model, v, curvature)
    return eta, m_val


@dataclass
class SubsolverOptions:
    """Knobs of ``solve_subproblem``.

    ``probe_curvature`` controls whether a Lanczos probe runs when no
    precomputed estimate is supplied. ``refine_steps`` bounds the number
    of normalized gradient steps on ``m`` used to polish the winning
    candidate (0 disables refinement, at most 20 are allowed).
    """

    probe_curvature: bool = True
    lanczos_tol: float = 1e-6
    lanczos_max_iters: int | None = None
    refine_steps: int = 0
    seed: int = 0

    def validate(self) -> None:
        if not 0 <= self.refine_steps <= 20:
            raise ContractError(
                f"refine_steps must lie in [0, 20], got {self.refine_steps}"
            )
        if self.lanczos_tol <= 0.0:
            raise ContractError("lanczos_tol must be positive")


@dataclass
class SubsolverResult:
    """Chosen step with the model values of every candidate.

    ``m_val <= cauchy_m`` always holds, and ``m_val <= eigen_m`` holds
    whenever negative curvature was detected. ``g_eta``, ``h_eta`` and
    ``step_norm`` are the inner products ``<G, eta>``, ``<H[eta], eta>``
    and ``||eta||`` of the returned step, kept so callers can reuse the
    model decomposition without extra Hessian products.
    """

    step: Tangent
    m_val: float
    cauchy_m: float
    eigen_m: float | None
    lambda_min_est: float | None
    eig_converged: bool | None
    g_eta: float
    h_eta: float
    step_norm: float
    refined: bool


def _refine(
    model: CubicModel,
    eta: Tangent,
    h_eta_vec: Tangent,
    steps: int,
) -> tuple[Tangent, Tangent, float, float, float]:
    """Normalized gradient descent on ``m`` with Armijo backtracking.

    Keeps ``H[eta]`` updated through linearity, so each step costs one
    Hessian product. Returns the final iterate with its cached products
    and scalar decomposition. The model value is monotonically
    non-increasing across accepted steps.
    """
    man = model.manifold
    g = model.gradient
    sigma = model.sigma
    g_eta = man.inner(g, eta)
    h_eta = man.inner(h_eta_vec, eta)
    nrm2 = man.inner(eta, eta)
    m_cur = g_eta + 0.5 * h_eta + (sigma / 3.0) * nrm2 ** 1.5

    for _ in range(steps):
        nrm = math.sqrt(nrm2)
        grad_m_data = g.data + h_eta_vec.data + sigma * nrm * eta.data
        gm = float(np.linalg.norm(grad_m_data))
        if gm <= 1e-12 * max(1.0, abs(m_cur)):
            break
        d = man.tangent(model.base, grad_m_data / gm, check=False)
        hd = model.hvp(d)
        # Scalars for evaluating m(eta - t d) without further products.
        gd = man.inner(g, d)
        cross = man.inner(h_eta_vec, d) + man.inner(hd, eta)
        hdd = man.inner(hd, d)
        ed = man.inner(eta, d)

        def phi(t: float) -> float:
            quad = h_eta - t * cross + t * t * hdd
            lin = g_eta - t * gd
            n2 = max(nrm2 - 2.0 * t * ed + t * t, 0.0)
            return lin + 0.5 * quad + (sigma / 3.0) * n2 ** 1.5

        t = gm / (abs(hdd) + 2.0 * sigma * (nrm + 1.0))
        accepted = False
        for _ in range(40):
            if phi(t) <= m_cur - 1e-4 * t * gm:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            break
        eta = man.tangent(model.base, eta.data - t * d.data, check=False)
        h_eta_vec = man.tangent(
            model.base, h_eta_vec.data - t * hd.data, check=False
        )
        g_eta = g_eta - t * gd
        h_eta = h_eta - t * cross + t * t * hdd
        nrm2 = max(nrm2 - 2.0 * t * ed + t * t, 0.0)
        m_cur = g_eta + 0.5 * h_eta + (sigma / 3.0) * nrm2 ** 1.5

    return eta, h_eta_vec, g_eta, h_eta, m_cur


def solve_subproblem(
    model: CubicModel,
    options: SubsolverOptions | None = None,
    probe: MinEigResult | None = None,
) -> SubsolverResult:
    """Approximately minimize the cubic model over the tangent space.

    A precomputed ``probe`` (for example the one used by the outer
    termination test) is reused instead of running a fresh Lanczos pass.
    Raises ``ZeroGradientError`` when the gradient is zero and no
    negative curvature is detected, since the caller should have
    terminated.
    """
    options = options or SubsolverOptions()
    options.validate()
    man = model.manifold
    gnorm = man.norm(model.gradient)

    cauchy: tuple[Tangent, float, float, float, float] | None = None
    if gnorm > 0.0:
        cauchy = _cauchy_candidate(model)
    cauchy_m = cauchy[1] if cauchy is not None else 0.0

    if probe is None and options.probe_curvature:
        probe = min_eig_estimate(
            man,
            model.base,
            model.hvp,
            tol=options.lanczos_tol,
            max_iters=options.lanczos_max_iters,
            seed=options.seed,
        )

    eigen: tuple[Tangent, float, float, float, float] | None = None
    lambda_est = probe.value if probe is not None else None
    if probe is not None and probe.value < -NEGATIVE_CURVATURE_REL_TOL * max(
        1.0, probe.op_norm_est
    ):
        eigen = _eigen_candidate(model, probe.vector, probe.value)
    eigen_m = eigen[1] if eigen is not None else None

    if cauchy is None and eigen is None:
        raise ZeroGradientError(
            "zero gradient without detected negative curvature, nothing to solve"
        )

    # Ties go to the Cauchy point.
    if cauchy is not None and (eigen_m is None or cauchy_m <= eigen_m):
        best, best_m, g_eta, h_eta, step_norm = cauchy
    else:
        assert eigen is not None
        best, best_m, g_eta, h_eta, step_norm = eigen

    refined = False
    if options.refine_steps > 0:
        h_best = model.hvp(best)
        eta, h_vec, g_ref, h_ref, m_ref = _refine(
            model, best, h_best, options.refine_steps
        )
        if m_ref < best_m:
            best, best_m, refined = eta, m_ref, True
            g_eta, h_eta = g_ref, h_ref
            step_norm = man.norm(best)

    return SubsolverResult(
        step=best,
        m_val=best_m,
        cauchy_m=cauchy_m,
        eigen_m=eigen_m,
        lambda_min_est=lambda_est,
        eig_converged=probe.converged if probe is not None else None,
        g_eta=g_eta,
        h_eta=h_eta,
        step_norm=step_norm,
        refined=refined,
    )
