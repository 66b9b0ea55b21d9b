"""Cubic-model sub-solver: closed-form steps, Lanczos probe, refinement."""

import math

import numpy as np
import pytest

from riemarc.errors import ContractError, ZeroGradientError
from riemarc.jointdiag import JointDiagObjective, generate_instance
from riemarc.manifolds import Euclidean, Stiefel
from riemarc.subproblem import (
    CubicModel,
    SubsolverOptions,
    cauchy_point,
    eigen_point,
    eval_model,
    min_eig_estimate,
    solve_subproblem,
)


def _euclidean_model(g_vec, h_mat, sigma):
    man = Euclidean(len(g_vec))
    x = man.point(np.zeros((len(g_vec), 1)))
    g = man.tangent(x, np.asarray(g_vec, float).reshape(-1, 1), check=False)
    h = np.asarray(h_mat, float)

    def hvp(eta):
        return man.tangent(x, h @ eta.data, check=False)

    return CubicModel(g, hvp, sigma, x, man), man, x


def _grid_min_1d(model, direction, lo=0.0, hi=3.0, step=1e-5):
    man = model.manifold
    d = direction.data
    gd = man.inner(model.gradient, direction)
    hd = man.inner(model.hvp(direction), direction)
    nd = man.norm(direction)
    alphas = np.arange(lo, hi + step, step)
    vals = alphas * gd + 0.5 * alphas**2 * hd + (model.sigma / 3.0) * (alphas * nd) ** 3
    return float(vals.min())


def test_model_requires_positive_sigma():
    model, _, _ = _euclidean_model([1.0, 0.0], np.eye(2), 1.0)
    with pytest.raises(ContractError):
        CubicModel(model.gradient, model.hvp, 0.0, model.base, model.manifold)
    with pytest.raises(ContractError):
        CubicModel(model.gradient, model.hvp, math.inf, model.base, model.manifold)


def test_cauchy_point_zero_quadratic_term():
    # <G, HG> = 0 with unit gradient and sigma = 1 gives alpha = 1 and
    # model value -2/3 exactly.
    model, man, _ = _euclidean_model([1.0, 0.0], np.diag([0.0, 1.0]), 1.0)
    eta, m_val = cauchy_point(model)
    assert man.norm(eta) == pytest.approx(1.0, abs=1e-15)
    assert m_val == pytest.approx(-2.0 / 3.0, abs=1e-15)
    assert eta.data[0, 0] == pytest.approx(-1.0, abs=1e-15)


def test_cauchy_point_identity_hessian():
    # alpha solves a^2 + a - 1 = 0, the inverse golden ratio.
    model, man, _ = _euclidean_model([1.0, 0.0], np.eye(2), 1.0)
    eta, m_val = cauchy_point(model)
    golden = (math.sqrt(5.0) - 1.0) / 2.0
    assert man.norm(eta) == pytest.approx(golden, abs=1e-14)
    expected = -golden + 0.5 * golden**2 + golden**3 / 3.0
    assert m_val == pytest.approx(expected, abs=1e-14)


def test_cauchy_point_is_line_minimizer():
    rng = np.random.default_rng(0)
    for trial in range(10):
        d = int(rng.integers(2, 7))
        g = rng.standard_normal(d)
        h = rng.standard_normal((d, d))
        h = (h + h.T) / 2.0
        sigma = float(rng.uniform(0.05, 5.0))
        model, man, x = _euclidean_model(g, h, sigma)
        eta, m_val = cauchy_point(model)
        direction = man.tangent(x, -g.reshape(-1, 1) / np.linalg.norm(g), check=False)
        grid = _grid_min_1d(model, direction, hi=max(3.0, 2.0 * man.norm(eta)))
        assert m_val <= grid + 1e-9
        assert abs(eval_model(model, eta) - m_val) < 1e-10


def test_cauchy_point_rejects_zero_gradient():
    model, _, _ = _euclidean_model([0.0, 0.0], np.eye(2), 1.0)
    with pytest.raises(ZeroGradientError):
        cauchy_point(model)


def test_eigen_point_orthogonal_gradient():
    # <G, v> = 0, curvature -1, sigma 1: beta = 1 and m = -1/6.
    model, man, x = _euclidean_model([1.0, 0.0], np.diag([1.0, -1.0]), 1.0)
    v = man.tangent(x, np.array([[0.0], [1.0]]), check=False)
    eta, m_val = eigen_point(model, v, -1.0)
    assert man.norm(eta) == pytest.approx(1.0, abs=1e-15)
    assert m_val == pytest.approx(-1.0 / 6.0, abs=1e-15)


def test_eigen_point_descending_sign_and_grid():
    # <G, v> = 0.5 flips the step against the gradient; the minimizer of
    # -b/2 - b^2/2 + b^3/3 over b >= 0 is (1 + sqrt(3)) / 2.
    model, man, x = _euclidean_model([0.5, 0.0], np.diag([-1.0, 1.0]), 1.0)
    v = man.tangent(x, np.array([[1.0], [0.0]]), check=False)
    eta, m_val = eigen_point(model, v, -1.0)
    assert eta.data[0, 0] < 0.0
    beta = (1.0 + math.sqrt(3.0)) / 2.0
    assert man.norm(eta) == pytest.approx(beta, abs=1e-14)
    betas = np.arange(0.0, 3.0, 1e-5)
    grid = np.min(-0.5 * betas - 0.5 * betas**2 + betas**3 / 3.0)
    assert m_val <= grid + 1e-9


def test_eigen_point_step_norm_lower_bound():
    rng = np.random.default_rng(1)
    for _ in range(20):
        d = int(rng.integers(2, 6))
        g = rng.standard_normal(d)
        h = rng.standard_normal((d, d))
        h = (h + h.T) / 2.0 - 2.0 * np.eye(d)
        sigma = float(rng.uniform(0.1, 3.0))
        model, man, x = _euclidean_model(g, h, sigma)
        evals, evecs = np.linalg.eigh(h)
        assert evals[0] < 0.0
        v = man.tangent(x, evecs[:, :1], check=False)
        eta, m_val = eigen_point(model, v, float(evals[0]))
        assert man.norm(eta) >= abs(evals[0]) / sigma - 1e-12
        assert m_val < 0.0


def test_eigen_point_rejects_nonnegative_curvature():
    model, man, x = _euclidean_model([1.0, 0.0], np.eye(2), 1.0)
    v = man.tangent(x, np.array([[0.0], [1.0]]), check=False)
    with pytest.raises(ContractError):
        eigen_point(model, v, 0.0)


def test_eigen_point_vanishes_as_sigma_grows():
    model, man, x = _euclidean_model([0.0, 0.0], np.diag([-1.0, 1.0]), 1e8)
    v = man.tangent(x, np.array([[1.0], [0.0]]), check=False)
    eta, _ = eigen_point(model, v, -1.0)
    assert man.norm(eta) <= 1e-7


def test_min_eig_frozen_diagonal():
    man = Euclidean(2)
    x = man.point(np.zeros((2, 1)))
    h = np.diag([2.0, -1.0])

    def hvp(eta):
        return man.tangent(x, h @ eta.data, check=False)

    got = min_eig_estimate(man, x, hvp, seed=0)
    assert got.converged
    assert got.value == pytest.approx(-1.0, abs=1e-10)
    assert abs(abs(got.vector.data[1, 0]) - 1.0) < 1e-8


def test_min_eig_rayleigh_upper_bound_and_accuracy():
    rng = np.random.default_rng(2)
    for _ in range(15):
        d = int(rng.integers(2, 12))
        h = rng.standard_normal((d, d))
        h = (h + h.T) / 2.0
        man = Euclidean(d)
        x = man.point(np.zeros((d, 1)))

        def hvp(eta, h=h, man=man, x=x):
            return man.tangent(x, h @ eta.data, check=False)

        got = min_eig_estimate(man, x, hvp, seed=rng)
        dense = float(np.linalg.eigvalsh(h)[0])
        # Rayleigh quotients never undershoot the true minimum.
        assert got.value >= dense - 1e-12
        assert got.value <= dense + 1e-6 * max(1.0, got.op_norm_est)
        assert got.iterations <= d


def test_min_eig_deterministic_for_seed():
    man = Euclidean(6)
    x = man.point(np.zeros((6, 1)))
    h = np.diag(np.linspace(-2.0, 3.0, 6))

    def hvp(eta):
        return man.tangent(x, h @ eta.data, check=False)

    a = min_eig_estimate(man, x, hvp, seed=9)
    b = min_eig_estimate(man, x, hvp, seed=9)
    assert a.value == b.value
    assert np.array_equal(a.vector.data, b.vector.data)


def test_min_eig_on_stiefel_tangent_space():
    """Against a dense eigensolve of the Hessian restricted to an
    orthonormal basis of the tangent space."""
    inst = generate_instance(6, 4, 2, seed=3, noise=0.5)
    obj = JointDiagObjective(inst)
    man = obj.manifold
    x = man.random_point(4)

    # Orthonormal tangent basis by projecting coordinate matrices.
    basis = []
    for p in range(4):
        for q in range(2):
            w = np.zeros((4, 2))
            w[p, q] = 1.0
            t = man.project(x, w).data
            for b in basis:
                t = t - np.tensordot(b, t) * b
            nrm = np.linalg.norm(t)
            if nrm > 1e-8:
                basis.append(t / nrm)
    assert len(basis) == man.intrinsic_dim

    def hvp(eta):
        return obj.hess_vec(x, eta)

    dense = np.zeros((len(basis), len(basis)))
    for j, bj in enumerate(basis):
        hb = hvp(man.tangent(x, bj, check=False)).data
        for i, bi in enumerate(basis):
            dense[i, j] = np.tensordot(bi, hb)
    lam_true = float(np.linalg.eigvalsh((dense + dense.T) / 2.0)[0])

    got = min_eig_estimate(man, x, hvp, seed=5)
    assert got.value >= lam_true - 1e-10
    assert got.value <= lam_true + 1e-5 * max(1.0, got.op_norm_est)


def test_solve_subproblem_a4_invariant():
    rng = np.random.default_rng(6)
    for _ in range(25):
        d = int(rng.integers(2, 8))
        g = rng.standard_normal(d) * rng.uniform(0.01, 2.0)
        h = rng.standard_normal((d, d))
        h = (h + h.T) / 2.0
        sigma = float(rng.uniform(0.05, 4.0))
        model, man, x = _euclidean_model(g, h, sigma)
        res = solve_subproblem(model, SubsolverOptions(seed=int(rng.integers(1_000_000))))
        assert res.m_val <= res.cauchy_m + 1e-15
        if res.eigen_m is not None:
            assert res.m_val <= res.eigen_m + 1e-15
        assert res.m_val < 0.0
        # Reported scalars describe the returned step.
        assert res.g_eta == pytest.approx(man.inner(model.gradient, res.step), abs=1e-12)
        direct_h = man.inner(model.hvp(res.step), res.step)
        assert res.h_eta == pytest.approx(direct_h, rel=1e-10, abs=1e-12)
        assert res.step_norm == pytest.approx(man.norm(res.step), abs=1e-12)
        recomposed = res.g_eta + 0.5 * res.h_eta + model.sigma / 3.0 * res.step_norm**3
        assert res.m_val == pytest.approx(recomposed, rel=1e-10, abs=1e-12)


def test_solve_subproblem_grid_cross_check():
    """On a 2-D instance the chosen value must not be worse than a dense
    grid search by more than the grid resolution."""
    model, man, x = _euclidean_model([1.0, 0.0], np.diag([1.0, -2.0]), 1.0)
    res = solve_subproblem(model, SubsolverOptions(seed=0, refine_steps=20))

    xs = np.arange(-3.0, 3.0, 1e-3)
    ys = np.arange(-3.0, 3.0, 1e-3)
    best = np.inf
    for x_chunk in np.array_split(xs, 12):
        gx, gy = np.meshgrid(x_chunk, ys, indexing="ij")
        n3 = (gx**2 + gy**2) ** 1.5
        vals = gx + 0.5 * (gx**2 - 2.0 * gy**2) + n3 / 3.0
        best = min(best, float(vals.min()))
    assert res.m_val <= 0.95 * best  # within 5 percent of the grid minimum
    assert res.m_val >= best - 1e-2  # and never meaningfully below it
    assert res.eigen_m is not None and res.eigen_m < res.cauchy_m


def test_small_gradient_strong_curvature_prefers_eigen():
    model, man, x = _euclidean_model([1e-2, 0.0], np.diag([1.0, -2.0]), 1.0)
    res = solve_subproblem(model, SubsolverOptions(seed=1))
    assert res.eigen_m is not None
    assert res.eigen_m < res.cauchy_m
    assert res.m_val == res.eigen_m
    # Step lies along the curvature direction.
    assert abs(res.step.data[0, 0]) < 1e-6 * abs(res.step.data[1, 0])


def test_positive_definite_path_has_no_eigen_value():
    model, man, x = _euclidean_model([1.0, 0.5], np.eye(2) * 2.0, 0.5)
    res = solve_subproblem(model, SubsolverOptions(seed=2))
    assert res.eigen_m is None
    assert res.lambda_min_est is not None and res.lambda_min_est > 0.0
    assert res.m_val == res.cauchy_m


def test_probe_disabled_skips_eigen():
    model, man, x = _euclidean_model([1.0, 0.0], np.diag([1.0, -2.0]), 1.0)
    res = solve_subproblem(model, SubsolverOptions(probe_curvature=False))
    assert res.eigen_m is None
    assert res.lambda_min_est is None
    assert res.m_val == res.cauchy_m


def test_zero_gradient_negative_curvature_takes_eigen_step():
    model, man, x = _euclidean_model([0.0, 0.0], np.diag([1.0, -1.0]), 1.0)
    res = solve_subproblem(model, SubsolverOptions(seed=3))
    assert res.cauchy_m == 0.0
    assert res.eigen_m is not None and res.m_val == res.eigen_m
    assert res.m_val == pytest.approx(-1.0 / 6.0, abs=1e-12)


def test_zero_gradient_psd_raises():
    model, man, x = _euclidean_model([0.0, 0.0], np.eye(2), 1.0)
    with pytest.raises(ZeroGradientError):
        solve_subproblem(model, SubsolverOptions(seed=4))


def test_scale_covariance():
    """(cG, cH, c sigma) leaves the step fixed and scales m by c."""
    rng = np.random.default_rng(7)
    g = rng.standard_normal(4)
    h = rng.standard_normal((4, 4))
    h = (h + h.T) / 2.0
    for c in (0.1, 7.0):
        m1, man, x = _euclidean_model(g, h, 1.3)
        m2, _, _ = _euclidean_model(c * g, c * h, c * 1.3)
        r1 = solve_subproblem(m1, SubsolverOptions(seed=8))
        r2 = solve_subproblem(m2, SubsolverOptions(seed=8))
        assert np.allclose(r1.step.data, r2.step.data, rtol=1e-10, atol=1e-12)
        assert r2.m_val == pytest.approx(c * r1.m_val, rel=1e-10)


def test_refinement_never_worse_and_monotone():
    rng = np.random.default_rng(9)
    improved = 0
    for _ in range(20):
        d = int(rng.integers(2, 8))
        g = rng.standard_normal(d)
        h = rng.standard_normal((d, d))
        h = (h + h.T) / 2.0
        sigma = float(rng.uniform(0.1, 2.0))
        model, man, x = _euclidean_model(g, h, sigma)
        plain = solve_subproblem(model, SubsolverOptions(seed=10))
        polished = solve_subproblem(model, SubsolverOptions(seed=10, refine_steps=20))
        assert polished.m_val <= plain.m_val + 1e-15
        assert polished.m_val <= polished.cauchy_m + 1e-15
        if polished.refined:
            improved += 1
            assert polished.m_val < plain.m_val
        # Model value still reported faithfully after refinement.
        assert eval_model(model, polished.step) == pytest.approx(
            polished.m_val, rel=1e-9, abs=1e-12
        )
    assert improved > 10  # refinement should usually find something


def test_refine_steps_bounds_validated():
    with pytest.raises(ContractError):
        SubsolverOptions(refine_steps=21).validate()
    with pytest.raises(ContractError):
        SubsolverOptions(refine_steps=-1).validate()
    with pytest.raises(ContractError):
        SubsolverOptions(lanczos_tol=0.0).validate()


def test_lemma_estimate_bounds_hold():
    """Decrease and step-norm lower bounds for both candidate steps,
    with dense reference quantities."""
    rng = np.random.default_rng(11)
    for _ in range(50):
        d = int(rng.integers(2, 11))
        g = rng.standard_normal(d) * rng.uniform(0.05, 3.0)
        h = rng.standard_normal((d, d))
        h = (h + h.T) / 2.0
        sigma = float(rng.uniform(0.05, 5.0))
        model, man, x = _euclidean_model(g, h, sigma)
        gnorm = np.linalg.norm(g)
        k_h = float(np.linalg.norm(h, 2))

        eta_c, m_c = cauchy_point(model)
        bound_c = (gnorm / (2.0 * math.sqrt(3.0))) * min(
            gnorm / k_h, math.sqrt(gnorm / sigma)
        )
        assert -m_c >= bound_c - 1e-10
        assert man.norm(eta_c) >= (
            math.sqrt(k_h**2 + 4.0 * sigma * gnorm) - k_h
        ) / (2.0 * sigma) - 1e-10

        evals, evecs = np.linalg.eigh(h)
        lam = float(evals[0])
        if lam < -1e-8:
            v = man.tangent(x, evecs[:, :1], check=False)
            eta_e, m_e = eigen_point(model, v, lam)
            nu = 1.0  # exact eigenvector achieves the full ratio
            norm_e = man.norm(eta_e)
            bound_e = (nu * abs(lam) / 6.0) * max(
                norm_e**2, nu**2 * lam**2 / sigma**2
            )
            assert -m_e >= bound_e - 1e-10
            assert norm_e >= nu * abs(lam) / sigma - 1e-10
