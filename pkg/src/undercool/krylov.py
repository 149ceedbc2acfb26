"""Restarted GMRES over matrix-free operators with right preconditioning."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonFiniteResidualError

__all__ = ["LinearOperator", "GmresConfig", "GmresResult", "arnoldi_step", "gmres_solve"]

BREAKDOWN_TOL = 1e-14


@dataclass
class LinearOperator:
    """Matrix-free linear operator: dimension plus an apply callable."""

    n: int
    apply: callable

    def __call__(self, v: np.ndarray) -> np.ndarray:
        return self.apply(v)


@dataclass
class GmresConfig:
    restart: int = 200
    max_iterations: int = 2000

    def __post_init__(self):
        if self.restart < 1:
            raise ValueError("restart length must be at least 1")


@dataclass
class GmresResult:
    x: np.ndarray
    iterations: int
    converged: bool
    residual_norm: float
    cycles: int = 1
    precond_applies: int = 0
    breakdown: bool = False


def arnoldi_step(apply_op, basis: np.ndarray, k: int, scale: float):
    """Extend an orthonormal basis by one vector using modified Gram-Schmidt
    with one reorthogonalization pass.

    ``basis`` holds basis vectors in its first k+1 rows.  Returns the
    Hessenberg column h (length k+2) and a breakdown flag; on breakdown the
    new vector is left as zeros.  ``scale`` is the norm of the initial
    residual, against which breakdown is judged.
    """
    w = apply_op(basis[k])
    h = np.zeros(k + 2)
    for j in range(k + 1):
        hj = np.dot(basis[j], w)
        h[j] += hj
        w = w - hj * basis[j]
    for j in range(k + 1):  # one reorthogonalization pass
        corr = np.dot(basis[j], w)
        h[j] += corr
        w = w - corr * basis[j]
    h[k + 1] = np.linalg.norm(w)
    if h[k + 1] < BREAKDOWN_TOL * scale:
        return h, None, True
    return h, w / h[k + 1], False


def _solve_upper(r: np.ndarray, g: np.ndarray) -> np.ndarray:
    k = g.size
    y = np.zeros(k)
    for i in range(k - 1, -1, -1):
        y[i] = (g[i] - r[i, i + 1 : k] @ y[i + 1 : k]) / r[i, i]
    return y


def gmres_solve(
    op,
    rhs: np.ndarray,
    tol: float,
    apply_minv=None,
    config: GmresConfig | None = None,
) -> GmresResult:
    """Solve op(x) = rhs to a relative residual of ``tol``.

    With a right preconditioner the Krylov space is built for op o M^{-1}
    and the returned x is already back-transformed, so the residual being
    tested is that of the original system.  Inside a cycle the Givens
    recurrence tracks it; at each restart the true residual is recomputed.
    """
    cfg = config or GmresConfig()
    apply_op = op.apply if hasattr(op, "apply") else op
    n = rhs.size

    counters = {"minv": 0}
    if apply_minv is None:
        minv = lambda v: v
    else:
        def minv(v):
            counters["minv"] += 1
            return apply_minv(v)

    bnorm = np.linalg.norm(rhs)
    if bnorm == 0.0:
        return GmresResult(np.zeros(n), 0, True, 0.0, cycles=0)
    target = tol * bnorm

    x = np.zeros(n)
    total_iters = 0
    cycles = 0
    breakdown = False
    res_norm = bnorm

    while total_iters < cfg.max_iterations:
        cycles += 1
        r = rhs - apply_op(x) if cycles > 1 else rhs.copy()
        beta = np.linalg.norm(r)
        res_norm = beta
        if beta <= target or not np.isfinite(beta):
            return GmresResult(
                x, total_iters, beta <= target, beta, cycles, counters["minv"]
            )

        m = min(cfg.restart, cfg.max_iterations - total_iters)
        basis = np.zeros((m + 1, n))
        basis[0] = r / beta
        hess = np.zeros((m + 1, m))
        cs = np.zeros(m)
        sn = np.zeros(m)
        g = np.zeros(m + 1)
        g[0] = beta

        k_used = 0
        cycle_converged = False
        failed = False
        preconditioned = lambda v: apply_op(minv(v))
        for k in range(m):
            try:
                h, vnew, broke = arnoldi_step(preconditioned, basis, k, beta)
            except NonFiniteResidualError:
                failed = True
                break
            if not np.isfinite(h).all():
                failed = True
                break
            hess[: k + 2, k] = h
            if not broke:
                basis[k + 1] = vnew
            total_iters += 1
            # apply stored Givens rotations, then a new one
            for i in range(k):
                tmp = cs[i] * hess[i, k] + sn[i] * hess[i + 1, k]
                hess[i + 1, k] = -sn[i] * hess[i, k] + cs[i] * hess[i + 1, k]
                hess[i, k] = tmp
            denom = np.hypot(hess[k, k], hess[k + 1, k])
            if denom == 0.0:
                cs[k], sn[k] = 1.0, 0.0
                denom = hess[k, k]
            else:
                cs[k] = hess[k, k] / denom
                sn[k] = hess[k + 1, k] / denom
            hess[k, k] = denom
            hess[k + 1, k] = 0.0
            g[k + 1] = -sn[k] * g[k]
            g[k] = cs[k] * g[k]
            k_used = k + 1
            res_norm = abs(g[k + 1])
            if broke:
                breakdown = True
                cycle_converged = True
                break
            if res_norm <= target:
                cycle_converged = True
                break

        if k_used > 0:
            y = _solve_upper(hess[:k_used, :k_used], g[:k_used])
            update = basis[:k_used].T @ y
            x = x + minv(update)
        if failed:
            # matvec failure: hand back the best iterate so far, flagged
            return GmresResult(
                x, total_iters, False, res_norm, cycles, counters["minv"]
            )

        if cycle_converged or breakdown:
            true_res = np.linalg.norm(rhs - apply_op(x))
            if breakdown or true_res <= target:
                return GmresResult(
                    x,
                    total_iters,
                    true_res <= target,
                    true_res,
                    cycles,
                    counters["minv"],
                    breakdown=breakdown,
                )
            # Givens estimate drifted below the true residual; keep cycling
        # restarted cycles recompute the true residual at the top of the loop

    true_res = np.linalg.norm(rhs - apply_op(x))
    return GmresResult(
        x, total_iters, true_res <= target, true_res, cycles, counters["minv"]
    )
