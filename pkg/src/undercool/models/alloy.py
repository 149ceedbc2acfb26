"""Directional solidification of a dilute binary alloy.

Phase field in [-1, 1] (1 solid, -1 liquid) coupled to a scaled solute
field under a frozen temperature gradient pulled at constant speed.  An
anti-trapping current removes the artificial solute trapping of the diffuse
interface.  Lengths are in interface-width units, times in the diffusive
unit derived from the coupling constant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from ..assembly import QuadState, join_fields
from ..mesh import StructuredMesh
from ..stepping import ThetaScheme
from .anisotropy import fourfold

__all__ = [
    "AlloyParams",
    "AlloyKernel",
    "phase_source",
    "frame_field",
    "map_u_to_c",
    "map_c_to_u",
    "directional_initial_condition",
]

# thin-interface asymptotics constants of the dilute-alloy model
A1 = 0.8839
A2 = 0.6267


@dataclass
class AlloyParams:
    anisotropy_strength: float = 0.01
    partition: float = 0.14              # equilibrium partition coefficient
    liquidus_slope: float = -2.6         # K / wt%
    composition: float = 3.0             # wt%
    coupling: float = 10.0
    liquid_diffusivity: float = 3e-9     # m^2 / s
    capillary_length: float = 5e-9       # m
    thermal_gradient: float = 1e4        # K / m
    gibbs_thomson: float = 2.4e-7        # K m
    pull_speed: float = 1e-2             # m / s
    interface_x0: float = 8.0            # initial interface position (scaled)
    antitrapping_normalized: bool = True
    # blend scales sized to the interface gradient, about 1/(2 sqrt 2) here
    aniso_reg_grad: float = 0.05
    antitrap_reg_grad: float = 0.02

    @property
    def length_unit(self) -> float:
        """Interface width in meters."""
        return self.capillary_length * self.coupling / A1

    @property
    def time_unit(self) -> float:
        return (
            self.capillary_length**2
            / self.liquid_diffusivity
            * A2
            * self.coupling**3
            / A1**2
        )

    @property
    def diffusivity(self) -> float:
        """Scaled solute diffusivity D_L * time_unit / length_unit^2 == A2 * coupling."""
        return self.liquid_diffusivity * self.time_unit / self.length_unit**2

    @property
    def solute_d0(self) -> float:
        return self.diffusivity / (1.0 + self.partition)

    @property
    def pull_velocity(self) -> float:
        """Isotherm frame speed in scaled units."""
        return self.pull_speed * self.time_unit / self.length_unit

    @property
    def frame_coefficient(self) -> float:
        """Thermal-gradient prefactor of the frame field, per scaled length."""
        k = self.partition
        denom = abs(self.liquidus_slope) * self.composition * (1.0 - k) / k
        return self.thermal_gradient * self.length_unit / denom

    def validate(self) -> None:
        if not 0.0 < self.partition < 1.0:
            raise ValueError("partition coefficient must lie in (0, 1)")
        if self.coupling <= 0.0:
            raise ValueError("coupling constant must be positive")
        for name in ("liquid_diffusivity", "capillary_length", "composition"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")


def phase_source(phi, drive, coupling):
    """Double well plus the coupled driving force:
    (phi - phi^3) - coupling * (1 - phi^2)^2 * drive.

    The well restores the bulk phases unconditionally; only the envelope
    couples to the local driving force (solute plus frame temperature).
    Vanishes identically at phi = +-1.
    """
    one = 1.0 - phi * phi
    return phi - phi**3 - coupling * one * one * drive


def frame_field(x, t, p: AlloyParams):
    """Scaled temperature offset of the pulled frame at position x, time t."""
    return p.frame_coefficient * (x - p.pull_velocity * t)


def map_u_to_c(u, phi, p: AlloyParams):
    """Scaled solute field to composition in wt%."""
    k = p.partition
    return (
        p.composition
        / (2.0 * k)
        * (1.0 + k - (1.0 - k) * phi)
        * (1.0 + (1.0 - k) * u)
    )


def map_c_to_u(c, phi, p: AlloyParams):
    k = p.partition
    return (2.0 * c * k / p.composition / (1.0 + k - (1.0 - k) * phi) - 1.0) / (
        1.0 - k
    )


@njit(cache=True, nogil=True)
def _gauss_terms(
    phi, u, gpx, gpy, gpz, gux, guy, guz, rate, phi_old, qx,
    three_d, is_new, weight, normalized,
    dt, eps, reg, at_reg2, kpart, coupling, dcoef, g4_coef, g4_shift,
    r0p, r1px, r1py, r1pz, r0u, r1ux, r1uy, r1uz,
):
    n = phi.size
    base = 1.0 - 3.0 * eps
    avg = 1.0 / 3.0 if three_d else 0.5
    mass_sign = 1.0 if is_new else -1.0
    inv_dt = mass_sign / dt
    at_coef = 1.0 / (2.0 * math.sqrt(2.0))
    half_k = 0.5 * (1.0 + kpart)
    omk = 1.0 - kpart
    for i in range(n):
        px = gpx[i]
        py = gpy[i]
        pz = gpz[i] if three_d else 0.0
        x2 = px * px
        y2 = py * py
        z2 = pz * pz
        s2 = x2 + y2 + z2
        quart = x2 * x2 + y2 * y2 + z2 * z2
        denom = s2 * s2 + reg
        qa = quart + avg * reg
        g = base + 4.0 * eps * qa / denom
        c = 32.0 * eps * g / (denom * denom)
        dgx = c * px * (x2 * denom - qa * s2)
        dgy = c * py * (y2 * denom - qa * s2)
        dgz = c * pz * (z2 * denom - qa * s2)
        g2 = g * g
        f = phi[i]
        uu = u[i]
        mass = 1.0 + omk * uu
        one = 1.0 - f * f
        g4 = g4_coef * (qx[i] - g4_shift)
        # double well restores the bulk phases; only the envelope couples
        # to the driving force u + frame
        src = f - f * f * f - coupling * one * one * (uu + g4)
        if is_new:
            # the solute-dependent mass acts as a mobility coefficient on
            # the rate, keeping the coupled mass block definite
            r0p[i] += mass * g2 * (f - phi_old[i]) / dt - weight * src
        else:
            r0p[i] += -weight * src
        hs2 = 0.5 * weight * s2
        r1px[i] += weight * g2 * px + hs2 * dgx
        r1py[i] += weight * g2 * py + hs2 * dgy
        if three_d:
            r1pz[i] += weight * g2 * pz + hs2 * dgz
        dq = weight * dcoef * 0.5 * (1.0 - f)
        # conservative solute mass: d/dt of chi(phi) u with
        # chi = (1 + k - (1-k) phi)/2, which folds the rejection source
        # into a bare rate term and telescopes the composition integral
        chi = half_k - 0.5 * omk * f
        r0u[i] += chi * uu * inv_dt
        r1ux[i] += dq * gux[i]
        r1uy[i] += dq * guy[i]
        if three_d:
            r1uz[i] += dq * guz[i]
        if is_new:
            rt = rate[i]
            r0u[i] -= 0.5 * rt
            at = at_coef * mass * rt
            if normalized:
                # smooth unit normal: vanishes with grad(phi), no kink at zero
                at = at / np.sqrt(s2 + at_reg2)
            r1ux[i] += at * px
            r1uy[i] += at * py
            if three_d:
                r1uz[i] += at * pz


class AlloyKernel:
    n_fields = 2
    field_names = ("phi", "solute")
    contour_level = 0.0
    needs_rate = True
    needs_old_value = True  # the phase mass multiplies the discrete rate

    def __init__(self, params: AlloyParams | None = None):
        self.params = params or AlloyParams()
        self.params.validate()

    def _run(self, qs, scheme, level, out):
        p = self.params
        vals = qs.val_new if level == "new" else qs.val_old
        grads = qs.grad_new if level == "new" else qs.grad_old
        phi, u = vals
        gphi, gu = grads
        three_d = len(gphi) == 3
        dummy = _DUMMY
        is_new = level == "new"
        weight = scheme.theta if is_new else 1.0 - scheme.theta
        rate = qs.rate0.reshape(-1) if is_new else dummy
        phi_old = qs.val0_old.reshape(-1) if is_new else dummy
        qx = np.ascontiguousarray(qs.coords[..., 0]).reshape(-1)
        r0p, r1p, r0u, r1u = out
        _gauss_terms(
            phi.reshape(-1),
            u.reshape(-1),
            gphi[0].reshape(-1),
            gphi[1].reshape(-1),
            gphi[2].reshape(-1) if three_d else dummy,
            gu[0].reshape(-1),
            gu[1].reshape(-1),
            gu[2].reshape(-1) if three_d else dummy,
            rate,
            phi_old,
            qx,
            three_d,
            is_new,
            weight,
            p.antitrapping_normalized,
            scheme.dt,
            p.anisotropy_strength,
            p.aniso_reg_grad**4,
            p.antitrap_reg_grad**2,
            p.partition,
            p.coupling,
            p.diffusivity,
            p.frame_coefficient,
            p.pull_velocity * qs.t_new,
            r0p.reshape(-1),
            r1p[0].reshape(-1),
            r1p[1].reshape(-1),
            r1p[2].reshape(-1) if three_d else dummy,
            r0u.reshape(-1),
            r1u[0].reshape(-1),
            r1u[1].reshape(-1),
            r1u[2].reshape(-1) if three_d else dummy,
        )

    def residual_gauss(self, qs: QuadState, scheme: ThetaScheme):
        ref = qs.val_new if qs.part in ("new", "full") else qs.val_old
        shape = ref[0].shape
        dim = len((qs.grad_new or qs.grad_old)[0])
        r0p = np.zeros(shape)
        r0u = np.zeros(shape)
        r1p = tuple(np.zeros(shape) for _ in range(dim))
        r1u = tuple(np.zeros(shape) for _ in range(dim))
        out = (r0p, r1p, r0u, r1u)
        if qs.part in ("new", "full"):
            self._run(qs, scheme, "new", out)
        if qs.part in ("old", "full"):
            self._run(qs, scheme, "old", out)
        return [(r0p, r1p), (r0u, r1u)]

    def precond_coefficients(self, qs: QuadState, scheme: ThetaScheme):
        p = self.params
        k = p.partition
        phi, u = qs.val_new
        gphi = np.stack(qs.grad_new[0], axis=-1)
        g2 = fourfold(gphi, p.anisotropy_strength, reg_grad=p.aniso_reg_grad) ** 2
        phase_block = (
            (1.0 + (1.0 - k) * u) * g2 / scheme.dt,
            scheme.theta * g2,
        )
        solute_block = (
            (1.0 + k - (1.0 - k) * phi) / (2.0 * scheme.dt),
            scheme.theta * p.diffusivity * (1.0 - phi) / 2.0,
        )
        return [phase_block, solute_block]

    def scales(self) -> dict:
        p = self.params
        return {
            # unit phase diffusivity in scaled units (W = 1, tau = 1)
            "tau": 1.0,
            "interface_width": 1.0,
            "heat_diffusivity": 0.0,
            "solute_diffusivity": p.diffusivity,
            "solute_d0": p.solute_d0,
        }


_DUMMY = np.zeros(1)


def _splitmix64(seed: int, index: np.ndarray) -> np.ndarray:
    """Counter-based uniform doubles in [0, 1), keyed by (seed, index)."""
    z = (np.uint64(seed) + index.astype(np.uint64) + np.uint64(1)) * np.uint64(
        0x9E3779B97F4A7C15
    )
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        z = z ^ (z >> np.uint64(31))
    return (z >> np.uint64(11)).astype(np.float64) / float(1 << 53)


def directional_initial_condition(
    mesh: StructuredMesh,
    params: AlloyParams,
    amplitude: float = 0.0,
    seed: int = 0,
    smooth: bool = False,
) -> np.ndarray:
    """Planar solid-liquid interface with a reproducible random corrugation.

    phi = 1 for x <= x0 + a*xi(transverse node), -1 beyond; u = -1
    everywhere.  xi is uniform in [-1, 1] from a counter generator keyed by
    (seed, transverse node index), so the field is independent of traversal
    order.  With ``smooth`` the jump is replaced by the equilibrium tanh
    profile through the same corrugated threshold, which implicit stepping
    needs to start cleanly.
    """
    npts = mesh.node_shape
    nx = npts[0]
    transverse = mesh.n_nodes // nx
    xi = 2.0 * _splitmix64(seed, np.arange(transverse, dtype=np.uint64)) - 1.0
    # node id = ix + nx * (transverse index); the offset depends only on the row
    row = np.arange(mesh.n_nodes) // nx
    threshold = params.interface_x0 + amplitude * xi[row]
    if smooth:
        phi = np.tanh((threshold - mesh.coords[:, 0]) / math.sqrt(2.0))
    else:
        phi = np.where(mesh.coords[:, 0] <= threshold, 1.0, -1.0)
    u = np.full(mesh.n_nodes, -1.0)
    return join_fields(phi, u)
