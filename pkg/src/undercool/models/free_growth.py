"""Free dendritic growth of a pure material: phase field coupled to heat.

The phase field is 1 in solid and 0 in liquid.  Growth is driven by an
undercooled melt; released latent heat feeds back through a source in the
heat equation.  All quantities are nondimensional.

The pointwise Gauss-point work is a compiled loop: the same formulas as the
module-level helpers, fused to one pass over the quadrature points.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from ..assembly import QuadState, join_fields
from ..mesh import StructuredMesh
from ..stepping import ThetaScheme
from .anisotropy import fourfold

__all__ = [
    "FreeGrowthParams",
    "FreeGrowthKernel",
    "bulk_drive",
    "seed_initial_condition",
]


@dataclass
class FreeGrowthParams:
    """Material and simulation constants for the pure-material model.

    ``mesh_scale`` is the grid spacing assumed by the bulk drive terms (the
    double well and the thermal driving force carry explicit 1/h^2 and 1/h
    factors); ``interface_width`` is stored independently and only
    cross-checked against it at configuration time.
    """

    anisotropy_strength: float = 0.005
    thermal_diffusivity: float = 4.0
    kinetic_coeff: float = 191.82
    interface_width: float = 0.02652
    latent_ratio: float = 1.0          # latent heat over specific heat
    far_temperature: float = 1.0
    undercooling: float = 0.55
    mesh_scale: float = 0.03
    seed_radius: float = 0.3
    # anisotropy blend scale: well below the interface-core gradient
    # (about 1/(4 W) here) but far above bulk-noise gradients
    aniso_reg_grad: float = 1.0

    @property
    def mobility(self) -> float:
        return 1.0 / self.kinetic_coeff

    @property
    def melt_temperature(self) -> float:
        return self.far_temperature + self.undercooling * self.latent_ratio

    @property
    def capillary_length(self) -> float:
        return 0.139 * self.interface_width

    def validate(self) -> None:
        for name in (
            "anisotropy_strength",
            "thermal_diffusivity",
            "kinetic_coeff",
            "interface_width",
            "latent_ratio",
            "far_temperature",
            "mesh_scale",
            "seed_radius",
        ):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 <= self.undercooling < 1.0:
            raise ValueError("undercooling must lie in [0, 1)")


def bulk_drive(phi, temp, p: FreeGrowthParams):
    """Pointwise double-well plus thermal driving force.

    beta*Gamma * phi(1-phi)(1-2phi)/h^2 - 5*beta*(T_m - T)*phi^2(1-phi)^2/h,
    with beta*Gamma == 1 by construction.
    """
    h = p.mesh_scale
    bg = p.kinetic_coeff * p.mobility
    pq = phi * (1.0 - phi)
    well = (bg / (h * h)) * pq * (1.0 - 2.0 * phi)
    drive = (5.0 * p.kinetic_coeff / h) * (p.melt_temperature - temp) * (pq * pq)
    return well - drive


@njit(cache=True, nogil=True)
def _gauss_terms(
    phi, temp, gpx, gpy, gpz, gtx, gty, gtz, rate,
    three_d, has_rate, weight, mass_sign,
    dt, eps, reg, bg, beta, alpha, latent, hcell, tmelt, avg,
    r0p, r1px, r1py, r1pz, r0t, r1tx, r1ty, r1tz,
):
    n = phi.size
    base = 1.0 - 3.0 * eps
    inv_dt = mass_sign / dt
    well_c = weight * bg / (hcell * hcell)
    drive_c = weight * 5.0 * beta / hcell
    wbg = weight * bg
    half_w = 0.5 * weight
    walpha = weight * alpha
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
        nrm = np.sqrt(s2)
        g2 = g * g
        f = phi[i]
        t = temp[i]
        pq = f * (1.0 - f)
        r0p[i] += g2 * f * inv_dt + well_c * pq * (1.0 - 2.0 * f) - drive_c * (
            tmelt - t
        ) * (pq * pq)
        hn = half_w * nrm
        r1px[i] += wbg * g2 * px + hn * dgx
        r1py[i] += wbg * g2 * py + hn * dgy
        if three_d:
            r1pz[i] += wbg * g2 * pz + hn * dgz
        src = latent * rate[i] if has_rate else 0.0
        r0t[i] += t * inv_dt - src
        r1tx[i] += walpha * gtx[i]
        r1ty[i] += walpha * gty[i]
        if three_d:
            r1tz[i] += walpha * gtz[i]


class FreeGrowthKernel:
    """Gauss-point residual and preconditioner-block coefficients."""

    n_fields = 2
    field_names = ("phi", "temperature")
    contour_level = 0.5
    needs_rate = True  # heat source uses the lagged phase rate

    def __init__(self, params: FreeGrowthParams | None = None):
        self.params = params or FreeGrowthParams()
        self.params.validate()

    def _run(self, qs, scheme, level, out):
        p = self.params
        vals = qs.val_new if level == "new" else qs.val_old
        grads = qs.grad_new if level == "new" else qs.grad_old
        phi, temp = vals
        gphi, gtemp = grads
        three_d = len(gphi) == 3
        dummy = _DUMMY
        weight = scheme.theta if level == "new" else 1.0 - scheme.theta
        mass_sign = 1.0 if level == "new" else -1.0
        has_rate = level == "new"
        rate = qs.rate0.reshape(-1) if has_rate else dummy
        r0p, r1p, r0t, r1t = out
        _gauss_terms(
            phi.reshape(-1),
            temp.reshape(-1),
            gphi[0].reshape(-1),
            gphi[1].reshape(-1),
            gphi[2].reshape(-1) if three_d else dummy,
            gtemp[0].reshape(-1),
            gtemp[1].reshape(-1),
            gtemp[2].reshape(-1) if three_d else dummy,
            rate,
            three_d,
            has_rate,
            weight,
            mass_sign,
            scheme.dt,
            p.anisotropy_strength,
            p.aniso_reg_grad**4,
            p.kinetic_coeff * p.mobility,
            p.kinetic_coeff,
            p.thermal_diffusivity,
            p.latent_ratio,
            p.mesh_scale,
            p.melt_temperature,
            0.5 if not three_d else 1.0 / 3.0,
            r0p.reshape(-1),
            r1p[0].reshape(-1),
            r1p[1].reshape(-1),
            r1p[2].reshape(-1) if three_d else dummy,
            r0t.reshape(-1),
            r1t[0].reshape(-1),
            r1t[1].reshape(-1),
            r1t[2].reshape(-1) if three_d else dummy,
        )

    def residual_gauss(self, qs: QuadState, scheme: ThetaScheme):
        ref = qs.val_new if qs.part in ("new", "full") else qs.val_old
        shape = ref[0].shape
        dim = len((qs.grad_new or qs.grad_old)[0])
        r0p = np.zeros(shape)
        r0t = np.zeros(shape)
        r1p = tuple(np.zeros(shape) for _ in range(dim))
        r1t = tuple(np.zeros(shape) for _ in range(dim))
        out = (r0p, r1p, r0t, r1t)
        if qs.part in ("new", "full"):
            self._run(qs, scheme, "new", out)
        if qs.part in ("old", "full"):
            self._run(qs, scheme, "old", out)
        return [(r0p, r1p), (r0t, r1t)]

    def precond_coefficients(self, qs: QuadState, scheme: ThetaScheme):
        """Mass/diffusion coefficients of the two diagonal blocks."""
        p = self.params
        gphi = np.stack(qs.grad_new[0], axis=-1)
        g2 = fourfold(gphi, p.anisotropy_strength, reg_grad=p.aniso_reg_grad) ** 2
        bg = p.kinetic_coeff * p.mobility
        phase_block = (g2 / scheme.dt, scheme.theta * bg * g2)
        heat_block = (1.0 / scheme.dt, scheme.theta * p.thermal_diffusivity)
        return [phase_block, heat_block]

    def scales(self) -> dict:
        p = self.params
        # effective phase diffusivity is beta*Gamma, expressed as W^2/tau
        bg = p.kinetic_coeff * p.mobility
        return {
            "tau": p.interface_width**2 / bg,
            "interface_width": p.interface_width,
            "heat_diffusivity": p.thermal_diffusivity,
            "solute_diffusivity": 0.0,
            "solute_d0": 0.0,
        }


_DUMMY = np.zeros(1)


def seed_initial_condition(
    mesh: StructuredMesh, params: FreeGrowthParams, radius: float | None = None
) -> np.ndarray:
    """Solid seed at the domain corner inside an anisotropy-modulated radius.

    phi = 1 where |x| <= r * g(direction), else 0.  The temperature starts
    at the uniform undercooled far-field value, which is what drives growth.
    """
    r = params.seed_radius if radius is None else radius
    if r <= 0.0:
        raise ValueError("seed radius must be positive")
    x = mesh.coords
    dist = np.sqrt(np.sum(x * x, axis=1))
    gdir = fourfold(x, params.anisotropy_strength)
    phi = (dist <= r * gdir).astype(float)
    temp = np.full(mesh.n_nodes, params.far_temperature)
    return join_fields(phi, temp)
