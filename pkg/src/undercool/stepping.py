"""Theta-method time level bookkeeping, lagged rates, and diffusion timescales."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["ThetaScheme", "TimescaleReport", "lagged_rate", "timescales"]


@dataclass(frozen=True)
class ThetaScheme:
    """One-parameter time integrator: theta 0 = explicit Euler, 1/2 =
    Crank-Nicolson, 1 = implicit Euler.  ``step`` is the index n of the
    level being advanced from."""

    theta: float
    dt: float
    step: int = 0

    def __post_init__(self):
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError("theta must lie in [0, 1]")
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")

    @property
    def t_old(self) -> float:
        return self.step * self.dt

    @property
    def t_new(self) -> float:
        return (self.step + 1) * self.dt

    def at_step(self, step: int) -> "ThetaScheme":
        return ThetaScheme(self.theta, self.dt, step)


def lagged_rate(
    new: np.ndarray, old: np.ndarray, prev: np.ndarray, scheme: ThetaScheme
) -> np.ndarray:
    """Theta-weighted two-interval rate of change.

    Returns theta/dt * (new - old) + (1 - theta)/dt * (old - prev) per node.
    On the first step callers pass prev == old, which zeroes the history
    term (first-order bootstrap).
    """
    th, dt = scheme.theta, scheme.dt
    return (th / dt) * (new - old) + ((1.0 - th) / dt) * (old - prev)


@dataclass(frozen=True)
class TimescaleReport:
    """Explicit-stability estimates for the diffusive fields.

    ``dt_phase``/``dt_solute``/``dt_heat`` are C * h^2 / D with C = 1/(2*dim)
    and the respective effective diffusivities; ``kappa`` is the scaled
    timestep 2*dt*D0/h^2 of the solute equation (1 at the explicit limit).
    Inactive fields report +inf.  The estimates are advisory; stability
    tests measure actual blow-up.
    """

    dt_phase: float
    dt_solute: float
    dt_heat: float
    kappa: float

    def as_dict(self) -> dict:
        return {
            "dt_phase": self.dt_phase,
            "dt_solute": self.dt_solute,
            "dt_heat": self.dt_heat,
            "kappa": self.kappa,
        }


def _cfl(h: float, diffusivity: float, dim: int) -> float:
    if diffusivity <= 0.0:
        return float("inf")
    return h * h / (2.0 * dim * diffusivity)


def timescales(scales: dict, h: float, dt: float, dim: int = 2) -> TimescaleReport:
    """Diffusion timescales from a kernel's ``scales()`` dictionary.

    Expected keys: ``tau`` and ``interface_width`` (phase relaxation time and
    width, giving phase diffusivity W^2/tau), ``solute_diffusivity``,
    ``heat_diffusivity``, and optionally ``solute_d0`` for the kappa scale.
    """
    tau = scales.get("tau", 0.0)
    width = scales.get("interface_width", 0.0)
    d_phase = (width * width / tau) if tau > 0.0 else 0.0
    d_sol = scales.get("solute_diffusivity", 0.0)
    d_heat = scales.get("heat_diffusivity", 0.0)
    d0 = scales.get("solute_d0", 0.0)
    kappa = 2.0 * dt * d0 / (h * h) if d0 > 0.0 else 0.0
    return TimescaleReport(
        dt_phase=_cfl(h, d_phase, dim),
        dt_solute=_cfl(h, d_sol, dim),
        dt_heat=_cfl(h, d_heat, dim),
        kappa=kappa,
    )
