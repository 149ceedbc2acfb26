import numpy as np
import pytest
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from undercool.krylov import GmresConfig, GmresResult, arnoldi_step, gmres_solve


def laplacian_2d(n):
    """5-point Dirichlet Laplacian on an n-by-n interior grid."""
    main = sp.diags([-1.0, 2.0, -1.0], [-1, 0, 1], shape=(n, n))
    eye = sp.identity(n)
    return (sp.kron(eye, main) + sp.kron(main, eye)).tocsr()


def test_identity_operator_single_iteration():
    rhs = np.arange(1.0, 6.0)
    r = gmres_solve(lambda v: v, rhs, tol=1e-12)
    assert r.converged
    assert r.iterations == 1
    assert np.allclose(r.x, rhs)


def test_perfect_preconditioner_single_iteration():
    d = np.arange(1.0, 11.0)
    rhs = np.ones(10)
    r = gmres_solve(lambda v: d * v, rhs, tol=1e-12, apply_minv=lambda v: v / d)
    assert r.converged
    assert r.iterations == 1
    assert np.allclose(d * r.x, rhs, atol=1e-10)


def test_zero_rhs():
    r = gmres_solve(lambda v: 2 * v, np.zeros(7), tol=1e-10)
    assert r.converged
    assert np.all(r.x == 0.0)
    assert r.iterations == 0


def test_laplacian_matches_direct_solve():
    a = laplacian_2d(100)  # 10000 unknowns
    rng = np.random.default_rng(17)
    rhs = rng.standard_normal(a.shape[0])
    r = gmres_solve(lambda v: a @ v, rhs, tol=1e-8)
    assert r.converged
    direct = spla.spsolve(a.tocsc(), rhs)
    assert np.linalg.norm(r.x - direct) / np.linalg.norm(direct) < 1e-6
    # iteration count recorded for regression, not asserted a priori
    assert 0 < r.iterations <= 2000


def test_right_preconditioning_preserves_true_residual_measure():
    a = laplacian_2d(20)
    diag = a.diagonal()
    rng = np.random.default_rng(18)
    rhs = rng.standard_normal(a.shape[0])
    r = gmres_solve(lambda v: a @ v, rhs, tol=1e-7, apply_minv=lambda v: v / diag)
    assert r.converged
    true = np.linalg.norm(a @ r.x - rhs)
    assert true <= 1e-7 * np.linalg.norm(rhs) * (1 + 1e-9)


def test_matches_reference_implementation_on_random_systems():
    rng = np.random.default_rng(19)
    for trial in range(3):
        a = np.eye(50) + 0.2 * rng.standard_normal((50, 50))
        rhs = rng.standard_normal(50)
        mine = gmres_solve(lambda v: a @ v, rhs, tol=1e-10)
        ref, info = spla.gmres(a, rhs, rtol=1e-10, restart=200, maxiter=2000)
        assert info == 0 and mine.converged
        assert np.linalg.norm(mine.x - ref) / np.linalg.norm(ref) < 1e-8


def test_restart_still_converges():
    a = laplacian_2d(12)
    rng = np.random.default_rng(20)
    rhs = rng.standard_normal(a.shape[0])
    r = gmres_solve(lambda v: a @ v, rhs, tol=1e-8,
                    config=GmresConfig(restart=10, max_iterations=5000))
    assert r.converged
    assert r.cycles > 1
    assert np.linalg.norm(a @ r.x - rhs) <= 1e-8 * np.linalg.norm(rhs) * (1 + 1e-9)


def test_max_iterations_returns_flagged_best_iterate():
    a = laplacian_2d(12)
    rng = np.random.default_rng(21)
    rhs = rng.standard_normal(a.shape[0])
    r = gmres_solve(lambda v: a @ v, rhs, tol=1e-14,
                    config=GmresConfig(restart=5, max_iterations=10))
    assert not r.converged
    assert r.iterations == 10
    assert np.isfinite(r.residual_norm)


def test_precond_apply_count_is_iterations_plus_one_per_cycle():
    a = laplacian_2d(10)
    rng = np.random.default_rng(22)
    rhs = rng.standard_normal(a.shape[0])
    counter = {"n": 0}

    def minv(v):
        counter["n"] += 1
        return v / a.diagonal()

    r = gmres_solve(lambda v: a @ v, rhs, tol=1e-9, apply_minv=minv)
    assert r.converged
    assert counter["n"] == r.precond_applies == r.iterations + r.cycles


def test_arnoldi_orthonormal_basis_and_hessenberg_relation():
    rng = np.random.default_rng(23)
    n, k_steps = 40, 20
    a = rng.standard_normal((n, n))
    apply_op = lambda v: a @ v
    basis = np.zeros((k_steps + 1, n))
    r0 = rng.standard_normal(n)
    beta = np.linalg.norm(r0)
    basis[0] = r0 / beta
    hess = np.zeros((k_steps + 1, k_steps))
    for k in range(k_steps):
        h, vnew, broke = arnoldi_step(apply_op, basis, k, beta)
        assert not broke
        hess[: k + 2, k] = h
        basis[k + 1] = vnew
    v = basis
    gram = v @ v.T
    assert np.abs(gram - np.eye(k_steps + 1)).max() < 1e-10
    lhs = a @ v[:k_steps].T
    rhs = v.T @ hess
    norm_a = np.linalg.norm(a)
    assert np.linalg.norm(lhs - rhs) <= 1e-10 * norm_a


def test_arnoldi_breakdown_on_eigenvector():
    d = np.array([3.0, 1.0, 2.0])
    apply_op = lambda v: d * v
    basis = np.zeros((2, 3))
    basis[0] = np.array([1.0, 0.0, 0.0])  # eigenvector of the diagonal operator
    h, vnew, broke = arnoldi_step(apply_op, basis, 0, 1.0)
    assert broke
    assert vnew is None
    assert h[0] == pytest.approx(3.0)
    # and the full solve exits exactly
    r = gmres_solve(apply_op, np.array([2.0, 0.0, 0.0]), tol=1e-12)
    assert r.converged
    assert np.allclose(r.x, [2.0 / 3.0, 0.0, 0.0])


def test_residual_estimate_nonincreasing_within_cycle():
    rng = np.random.default_rng(24)
    a = np.eye(30) + 0.3 * rng.standard_normal((30, 30))
    rhs = rng.standard_normal(30)
    seen = []

    def spy(v):
        seen.append(np.linalg.norm(a @ v))
        return a @ v

    # track the Givens estimates through a custom run of the same algorithm
    basis = np.zeros((31, 30))
    beta = np.linalg.norm(rhs)
    basis[0] = rhs / beta
    hess = np.zeros((31, 30))
    cs, sn = np.zeros(30), np.zeros(30)
    g = np.zeros(31)
    g[0] = beta
    estimates = []
    for k in range(30):
        h, vnew, broke = arnoldi_step(lambda v: a @ v, basis, k, beta)
        hess[: k + 2, k] = h
        if not broke:
            basis[k + 1] = vnew
        for i in range(k):
            t = cs[i] * hess[i, k] + sn[i] * hess[i + 1, k]
            hess[i + 1, k] = -sn[i] * hess[i, k] + cs[i] * hess[i + 1, k]
            hess[i, k] = t
        den = np.hypot(hess[k, k], hess[k + 1, k])
        cs[k], sn[k] = hess[k, k] / den, hess[k + 1, k] / den
        hess[k, k], hess[k + 1, k] = den, 0.0
        g[k + 1] = -sn[k] * g[k]
        g[k] = cs[k] * g[k]
        estimates.append(abs(g[k + 1]))
        if broke:
            break
    assert all(b <= a_ + 1e-12 for a_, b in zip(estimates, estimates[1:]))


def test_linear_operator_wrapper():
    from undercool.krylov import LinearOperator

    op = LinearOperator(n=4, apply=lambda v: 3.0 * v)
    r = gmres_solve(op, np.ones(4), tol=1e-12)
    assert r.converged
    assert np.allclose(r.x, 1.0 / 3.0)
