"""Inexact Newton with finite-difference Jacobian products and backtracking.

Each Newton step solves J dU = -F with GMRES to an adaptive (forcing)
tolerance, then backtracks the step length until the residual norm does not
increase.  The Jacobian never exists: its action is a one-sided difference
of the residual.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NonFiniteResidualError
from .krylov import GmresConfig, gmres_solve

__all__ = [
    "NewtonConfig",
    "NewtonReport",
    "forcing_update",
    "jfnk_matvec",
    "newton_solve",
]

_EPS0 = math.sqrt(np.finfo(float).eps)


@dataclass
class NewtonConfig:
    rel_tol: float = 1e-6
    abs_tol: float = 0.0
    max_iterations: int = 200
    forcing_gamma: float = 0.9
    forcing_power: float = 1.5
    eta0: float = 0.1
    eta_min: float = 1e-6
    eta_max: float = 0.01
    ls_reduction: float = 0.5
    ls_max_backtracks: int = 10
    gmres: GmresConfig = field(default_factory=GmresConfig)

    def __post_init__(self):
        if not 0.0 < self.forcing_gamma <= 1.0:
            raise ValueError("forcing gamma must lie in (0, 1]")
        if not 1.0 < self.forcing_power <= 2.0:
            raise ValueError("forcing power must lie in (1, 2]")
        if not 0.0 < self.eta_min <= self.eta0:
            raise ValueError("need 0 < eta_min <= eta0")
        if not self.eta_min <= self.eta_max < 1.0:
            raise ValueError("need eta_min <= eta_max < 1")


@dataclass
class NewtonReport:
    converged: bool = False
    iterations: int = 0
    initial_norm: float = 0.0
    final_norm: float = 0.0
    residual_norms: list = field(default_factory=list)
    gmres_iterations: list = field(default_factory=list)
    step_lengths: list = field(default_factory=list)
    etas: list = field(default_factory=list)
    epsilons: list = field(default_factory=list)
    failure_reason: str = ""

    @property
    def total_gmres(self) -> int:
        return int(sum(self.gmres_iterations))


def forcing_update(
    eta_prev: float, fnorm: float, fnorm_prev: float, cfg: NewtonConfig
) -> float:
    """Adaptive linear tolerance tied to nonlinear progress, safeguarded
    from below by the previous tolerance and clipped into [eta_min, eta_max]."""
    gamma, omega = cfg.forcing_gamma, cfg.forcing_power
    raw = gamma * (fnorm / fnorm_prev) ** omega
    lo = max(gamma * eta_prev**omega, cfg.eta_min)
    return min(max(raw, lo), cfg.eta_max)


def jfnk_matvec(residual_fn, u: np.ndarray, f_of_u: np.ndarray, v: np.ndarray):
    """One-sided difference approximation of J(u) @ v.

    The perturbation is sqrt(machine eps) * sqrt(1 + |u|) / |v|, the usual
    balance between truncation and rounding error.
    """
    vnorm = np.linalg.norm(v)
    if vnorm == 0.0:
        return np.zeros_like(v)
    eps = _EPS0 * math.sqrt(1.0 + np.linalg.norm(u)) / vnorm
    return (residual_fn(u + eps * v) - f_of_u) / eps


class _FdOperator:
    """Jacobian action at a frozen state, recording the perturbations used."""

    def __init__(self, residual_fn, u, f_of_u):
        self.residual_fn = residual_fn
        self.u = u
        self.f_of_u = f_of_u
        self.unorm = np.linalg.norm(u)
        self.epsilons: list[float] = []

    def __call__(self, v):
        vnorm = np.linalg.norm(v)
        if vnorm == 0.0:
            return np.zeros_like(v)
        eps = _EPS0 * math.sqrt(1.0 + self.unorm) / vnorm
        self.epsilons.append(eps)
        return (self.residual_fn(self.u + eps * v) - self.f_of_u) / eps


def newton_solve(
    residual_fn,
    u0: np.ndarray,
    cfg: NewtonConfig | None = None,
    precond_apply=None,
) -> tuple[np.ndarray, NewtonReport]:
    """Drive the residual below rel_tol * |F(u0)| + abs_tol.

    Returns the final iterate and a per-iteration report.  On line-search
    exhaustion or hitting the iteration cap, ``report.converged`` is False
    and the caller decides the step policy.
    """
    cfg = cfg or NewtonConfig()
    report = NewtonReport()
    u = np.asarray(u0, dtype=float).copy()

    if not np.isfinite(u).all():
        report.failure_reason = "non-finite initial state"
        return u, report

    try:
        f = residual_fn(u)
    except NonFiniteResidualError as exc:
        report.failure_reason = f"non-finite initial residual ({exc})"
        return u, report
    fnorm = np.linalg.norm(f)
    report.initial_norm = fnorm
    report.residual_norms.append(fnorm)
    target = cfg.rel_tol * fnorm + cfg.abs_tol
    if not np.isfinite(fnorm):
        report.failure_reason = "non-finite initial residual"
        return u, report

    eta = cfg.eta0
    fnorm_prev = fnorm
    for it in range(cfg.max_iterations):
        if fnorm <= target:
            report.converged = True
            break
        if it > 0:
            eta = forcing_update(eta, fnorm, fnorm_prev, cfg)
        op = _FdOperator(residual_fn, u, f)
        lin = gmres_solve(op, -f, tol=eta, apply_minv=precond_apply,
                          config=cfg.gmres)
        report.etas.append(eta)
        report.gmres_iterations.append(lin.iterations)
        report.epsilons.append(op.epsilons[0] if op.epsilons else 0.0)
        if not np.isfinite(lin.x).all() or not np.any(lin.x):
            report.failure_reason = "linear solve produced no usable step"
            break

        step = 1.0
        accepted = False
        for _ in range(cfg.ls_max_backtracks + 1):
            trial = u + step * lin.x
            try:
                f_trial = residual_fn(trial)
                fn_trial = np.linalg.norm(f_trial)
            except NonFiniteResidualError:
                fn_trial = math.inf
            if np.isfinite(fn_trial) and fn_trial <= fnorm:
                accepted = True
                break
            step *= cfg.ls_reduction
        if not accepted:
            report.failure_reason = "line search exhausted"
            break

        u = trial
        f = f_trial
        fnorm_prev = fnorm
        fnorm = fn_trial
        report.iterations += 1
        report.residual_norms.append(fnorm)
        report.step_lengths.append(step)
    else:
        if fnorm <= target:
            report.converged = True
        else:
            report.failure_reason = "maximum Newton iterations reached"

    report.final_norm = fnorm
    return u, report
