"""Joint approximate diagonalization of symmetric matrices on the
Stiefel manifold.

Given symmetric ``d x d`` matrices ``C_1 .. C_n``, find ``U`` with
orthonormal columns maximizing the diagonal energy of the congruences
``U^T C_i U``, that is, minimize

    f(U) = -(1/n) sum_i || ddiag(U^T C_i U) ||_F^2

where ``ddiag`` keeps the diagonal of a square matrix and zeroes the
rest. The Euclidean component gradients are

    egrad f_i(U) = -4 C_i U ddiag(U^T C_i U),

the Riemannian gradient is the tangent projection of their mean, and
the Riemannian Hessian follows from differentiating the projected
gradient field and projecting again.

``generate_instance`` draws a family sharing one random orthogonal
congruence, ``C_i = Q D_i Q^T + noise * sym(E_i)`` with positive
diagonal ``D_i`` and Gaussian ``E_i``. At ``noise = 0`` every component
is exactly diagonalized by ``Q``, so all component gradients vanish at
the optimum; the noise level controls how far the family is from being
jointly diagonalizable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError
from .manifolds import Point, Stiefel, Tangent, qr_orthonormal_factor, sym
from .objectives import SeparableObjective

SYMMETRY_TOL = 1e-8


@dataclass(frozen=True)
class JDInstance:
    """A problem instance: the matrix family and its generation record."""

    c: np.ndarray  # (n, d, d), symmetric
    r: int
    seed: int
    noise: float

    def __post_init__(self) -> None:
        c = np.asarray(self.c, dtype=float)
        if c.ndim != 3 or c.shape[1] != c.shape[2]:
            raise ContractError(f"expected (n, d, d) matrices, got {c.shape}")
        if not 1 <= self.r <= c.shape[1]:
            raise ContractError(f"need 1 <= r <= d, got r={self.r}, d={c.shape[1]}")
        asym = np.abs(c - np.transpose(c, (0, 2, 1))).max(initial=0.0)
        if asym > SYMMETRY_TOL:
            raise ContractError(
                f"input matrices are asymmetric beyond tolerance, {asym:.3e}"
            )
        # Symmetrize exactly so downstream identities hold to the bit.
        c = (c + np.transpose(c, (0, 2, 1))) / 2.0
        c.setflags(write=False)
        object.__setattr__(self, "c", c)

    @property
    def n(self) -> int:
        return self.c.shape[0]

    @property
    def d(self) -> int:
        return self.c.shape[1]


def generate_instance(
    n: int, d: int, r: int, seed: int, noise: float = 1e-3
) -> JDInstance:
    """Draw an instance with a shared planted congruence."""
    if n < 1:
        raise ContractError(f"need at least one matrix, got n={n}")
    if noise < 0.0:
        raise ContractError(f"noise must be non-negative, got {noise}")
    rng = np.random.default_rng([seed, 3])
    q = qr_orthonormal_factor(rng.standard_normal((d, d)))
    diags = rng.uniform(1.0, 2.0, size=(n, d))
    e = rng.standard_normal((n, d, d))
    c = np.einsum("pj,mj,qj->mpq", q, diags, q)
    c += noise * (e + np.transpose(e, (0, 2, 1))) / 2.0
    return JDInstance(c=c, r=r, seed=seed, noise=noise)


def save_instance(instance: JDInstance, path) -> None:
    """Serialize an instance to a compressed numpy archive."""
    np.savez_compressed(
        path,
        c=instance.c,
        r=np.array(instance.r),
        seed=np.array(instance.seed),
        noise=np.array(instance.noise),
    )


def load_instance(path) -> JDInstance:
    """Load an instance, revalidating symmetry."""
    with np.load(path) as data:
        return JDInstance(
            c=data["c"],
            r=int(data["r"]),
            seed=int(data["seed"]),
            noise=float(data["noise"]),
        )


class JointDiagObjective(SeparableObjective):
    """Finite-sum diagonalization objective on ``Stiefel(d, r)``."""

    def __init__(self, instance: JDInstance):
        self.instance = instance
        self.n = instance.n
        self.manifold = Stiefel(instance.d, instance.r)

    def _c(self, idx: np.ndarray | None) -> np.ndarray:
        return self.instance.c if idx is None else self.instance.c[idx]

    def value(self, x: Point, idx: np.ndarray | None = None) -> float:
        idx = self._check_idx(idx)
        c = self._c(idx)
        cu = c @ x.data
        diag = np.einsum("pj,mpj->mj", x.data, cu)
        return float(-np.mean(np.sum(diag**2, axis=1)))

    def euclidean_gradient(self, x: Point, idx: np.ndarray | None = None) -> np.ndarray:
        """Mean Euclidean gradient, an ambient ``d x r`` matrix."""
        idx = self._check_idx(idx)
        c = self._c(idx)
        cu = c @ x.data
        diag = np.einsum("pj,mpj->mj", x.data, cu)
        return -4.0 * np.einsum("mpj,mj->pj", cu, diag) / c.shape[0]

    def euclidean_gradient_derivative(
        self, x: Point, xi: Tangent, idx: np.ndarray | None = None
    ) -> np.ndarray:
        """Directional derivative of the mean Euclidean gradient at ``x``
        along ``xi``, an ambient ``d x r`` matrix."""
        idx = self._check_idx(idx)
        c = self._c(idx)
        u = x.data
        v = xi.data
        cu = c @ u
        cv = c @ v
        diag_uu = np.einsum("pj,mpj->mj", u, cu)
        diag_vu = np.einsum("pj,mpj->mj", v, cu)
        diag_uv = np.einsum("pj,mpj->mj", u, cv)
        out = (
            np.einsum("mpj,mj->pj", cv, diag_uu)
            + np.einsum("mpj,mj->pj", cu, diag_vu)
            + np.einsum("mpj,mj->pj", cu, diag_uv)
        )
        return -4.0 * out / c.shape[0]

    def gradient(self, x: Point, idx: np.ndarray | None = None) -> Tangent:
        return self.manifold.project(x, self.euclidean_gradient(x, idx))

    def hess_vec(self, x: Point, xi: Tangent, idx: np.ndarray | None = None) -> Tangent:
        """Riemannian Hessian-vector product.

        Differentiates the projected gradient field
        ``U -> egrad(U) - U sym(U^T egrad(U))`` along ``xi`` and projects
        the result back onto the tangent space.
        """
        idx = self._check_idx(idx)
        u = x.data
        eg = self.euclidean_gradient(x, idx)
        deg = self.euclidean_gradient_derivative(x, xi, idx)
        w = (
            deg
            - xi.data @ sym(u.T @ eg)
            - u @ sym(xi.data.T @ eg)
            - u @ sym(u.T @ deg)
        )
        return self.manifold.project(x, w)
