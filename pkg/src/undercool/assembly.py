"""Element-loop residual assembly and sparse field-block assembly.

A physics kernel supplies pointwise integrands at quadrature points; this
module interpolates nodal states to those points, weights the integrands by
the basis tables, and scatters element contributions into global vectors or
sparse matrices.  Zero-Neumann boundaries need no special handling: boundary
integrals are simply omitted.

State vectors are flat and block-ordered by field: all values of field 0,
then all of field 1, and so on.  Gradients at quadrature points are kept as
per-component contiguous (n_elem, nq) arrays, which keeps the pointwise
kernels cache-friendly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import NonFiniteResidualError
from .mesh import QuadratureRule, StructuredMesh
from .stepping import ThetaScheme, lagged_rate

__all__ = [
    "StateHistory",
    "QuadState",
    "NonFiniteResidualError",
    "split_fields",
    "join_fields",
    "assemble_residual",
    "frozen_quad_state",
    "TimestepResidual",
    "assemble_field_matrix",
]


@dataclass
class StateHistory:
    """The three state levels entering a theta step (new, old, previous)."""

    new: np.ndarray
    old: np.ndarray
    prev: np.ndarray


def split_fields(u: np.ndarray, n_fields: int) -> np.ndarray:
    """View a block-ordered flat state as an (n_fields, n_nodes) array."""
    return u.reshape(n_fields, -1)


def join_fields(*fields: np.ndarray) -> np.ndarray:
    return np.concatenate([np.asarray(f, dtype=float).reshape(-1) for f in fields])


@dataclass
class QuadState:
    """Interpolated fields at quadrature points for one residual evaluation.

    ``val_*[f]`` is (n_elem, nq); ``grad_*[f]`` is a dim-tuple of
    (n_elem, nq) component arrays.  ``part`` selects which time level the
    kernel should integrate: 'new', 'old', or 'full'.
    """

    part: str
    t_new: float
    t_old: float
    coords: np.ndarray | None = None  # (n_elem, nq, dim)
    val_new: list | None = None
    grad_new: list | None = None
    val_old: list | None = None
    grad_old: list | None = None
    rate0: np.ndarray | None = None      # lagged rate of field 0 at gauss points
    val0_old: np.ndarray | None = None   # old field-0 values at gauss points


def _basis_mats(basis):
    """Matmul-shaped basis tables, cached on the basis object.

    Returns (values_t, grad_comp, values_w, grad_comp_w) where values_t is
    (nloc, nq), grad_comp[d] is (nloc, nq), and the *_w variants fold the
    jxw quadrature weights in for the scatter step (transposed to (nq, nloc)).
    """
    cache = getattr(basis, "_mats", None)
    if cache is None:
        nq, nloc, dim = basis.gradients.shape
        values_t = np.ascontiguousarray(basis.values.T)
        grad_comp = [
            np.ascontiguousarray(basis.gradients[:, :, d].T) for d in range(dim)
        ]
        values_w = np.ascontiguousarray(basis.values * basis.jxw[:, None])
        grad_comp_w = [
            np.ascontiguousarray(basis.gradients[:, :, d] * basis.jxw[:, None])
            for d in range(dim)
        ]
        cache = (values_t, grad_comp, values_w, grad_comp_w)
        basis._mats = cache
    return cache


def _interp(basis, nodal, conn):
    values_t, grad_comp, _, _ = _basis_mats(basis)
    gathered = nodal[conn]  # (ne, nloc)
    vals = gathered @ values_t
    grads = tuple(gathered @ g for g in grad_comp)
    return vals, grads


def _gather_quad_state(mesh, kernel, states, scheme, part, rule, elements):
    basis = mesh.basis(rule)
    conn = mesh.conn if elements is None else mesh.conn[elements]
    nf = kernel.n_fields
    qs = QuadState(part=part, t_new=scheme.t_new, t_old=scheme.t_old)
    coords = mesh.gauss_coords(rule)
    qs.coords = coords if elements is None else coords[elements]

    if part in ("new", "full"):
        fnew = split_fields(states.new, nf)
        qs.val_new, qs.grad_new = [], []
        for f in range(nf):
            v, g = _interp(basis, fnew[f], conn)
            qs.val_new.append(v)
            qs.grad_new.append(g)
        if kernel.needs_rate:
            phi_old = split_fields(states.old, nf)[0]
            rate = lagged_rate(
                split_fields(states.new, nf)[0],
                phi_old,
                split_fields(states.prev, nf)[0],
                scheme,
            )
            values_t = _basis_mats(basis)[0]
            qs.rate0 = rate[conn] @ values_t
            if getattr(kernel, "needs_old_value", False):
                qs.val0_old = phi_old[conn] @ values_t
    if part in ("old", "full"):
        fold = split_fields(states.old, nf)
        qs.val_old, qs.grad_old = [], []
        for f in range(nf):
            v, g = _interp(basis, fold[f], conn)
            qs.val_old.append(v)
            qs.grad_old.append(g)
    return qs, basis, conn


def _scatter(mesh, basis, conn, integrands, n_fields) -> np.ndarray:
    """Weight integrands by the basis and accumulate into a global vector.

    Each integrand is (r0, r1): a value term tested against psi and a flux
    term (tuple of component arrays) tested against grad psi.
    """
    n = mesh.n_nodes
    out = np.zeros(n_fields * n)
    _, _, values_w, grad_comp_w = _basis_mats(basis)
    conn_flat = conn.reshape(-1)
    for f, (r0, r1) in enumerate(integrands):
        elem = None
        if r0 is not None:
            elem = r0 @ values_w
        if r1 is not None:
            for d, comp in enumerate(r1):
                if comp is None:
                    continue
                flux = comp @ grad_comp_w[d]
                elem = flux if elem is None else elem + flux
        if elem is None:
            continue
        acc = np.bincount(conn_flat, weights=elem.reshape(-1), minlength=n)
        out[f * n : (f + 1) * n] += acc
    return out


def _check_finite(conn, vec, integrands) -> None:
    if np.isfinite(vec).all():
        return
    # slow path: locate the offending element/quadrature point for the report
    for f, (r0, r1) in enumerate(integrands):
        parts = [("value", r0)] + [
            (f"flux[{d}]", c) for d, c in enumerate(r1 or ()) if c is not None
        ]
        for name, arr in parts:
            if arr is None or np.isfinite(arr).all():
                continue
            e, q = np.argwhere(~np.isfinite(arr))[0]
            raise NonFiniteResidualError(
                f"non-finite {name} integrand for field {f} at element "
                f"{int(e)} (first node {int(conn[e, 0])}), quadrature point {int(q)}"
            )
    raise NonFiniteResidualError("non-finite residual entry after assembly")


def frozen_quad_state(
    mesh: StructuredMesh,
    kernel,
    state: np.ndarray,
    scheme: ThetaScheme,
    rule: QuadratureRule | None = None,
) -> QuadState:
    """Interpolate a single state to quadrature points (for linearizations)."""
    basis = mesh.basis(rule)
    nf = kernel.n_fields
    fields = split_fields(state, nf)
    qs = QuadState(part="new", t_new=scheme.t_new, t_old=scheme.t_old)
    qs.coords = mesh.gauss_coords(rule)
    qs.val_new, qs.grad_new = [], []
    for f in range(nf):
        v, g = _interp(basis, fields[f], mesh.conn)
        qs.val_new.append(v)
        qs.grad_new.append(g)
    return qs


def assemble_residual(
    mesh: StructuredMesh,
    kernel,
    states: StateHistory,
    scheme: ThetaScheme,
    rule: QuadratureRule | None = None,
    elements: np.ndarray | None = None,
    part: str = "full",
) -> np.ndarray:
    """Global residual of one theta step, summed over the given elements."""
    qs, basis, conn = _gather_quad_state(
        mesh, kernel, states, scheme, part, rule, elements
    )
    integrands = kernel.residual_gauss(qs, scheme)
    out = _scatter(mesh, basis, conn, integrands, kernel.n_fields)
    _check_finite(conn, out, integrands)
    return out


class TimestepResidual:
    """Residual of one timestep as a function of the new state only.

    The old-level contribution is independent of the Newton iterate, so it
    is assembled once here and reused by every evaluation inside the solve.
    """

    def __init__(
        self,
        mesh: StructuredMesh,
        kernel,
        old: np.ndarray,
        prev: np.ndarray,
        scheme: ThetaScheme,
        rule: QuadratureRule | None = None,
    ):
        self.mesh = mesh
        self.kernel = kernel
        self.scheme = scheme
        self.rule = rule
        self.old = old
        self.prev = prev
        self._states = StateHistory(new=old, old=old, prev=prev)
        self.fixed_part = assemble_residual(
            mesh, kernel, self._states, scheme, rule=rule, part="old"
        )
        self.evaluations = 0

    def __call__(self, u_new: np.ndarray) -> np.ndarray:
        self.evaluations += 1
        self._states.new = u_new
        live = assemble_residual(
            self.mesh, self.kernel, self._states, self.scheme, rule=self.rule,
            part="new",
        )
        return live + self.fixed_part


def assemble_field_matrix(
    mesh: StructuredMesh,
    cmass,
    cdiff,
    rule: QuadratureRule | None = None,
) -> sp.csr_matrix:
    """Assemble (cmass * psi_j, psi_i) + (cdiff * grad psi_j, grad psi_i).

    ``cmass``/``cdiff`` may be scalars or per-quadrature-point arrays of
    shape (n_elements, nq).
    """
    basis = mesh.basis(rule)
    nq, nloc = basis.values.shape
    ne = mesh.n_elements
    jxw = basis.jxw

    def as_field(c):
        arr = np.asarray(c, dtype=float)
        if arr.ndim == 0:
            return np.broadcast_to(arr, (ne, nq))
        return arr

    cm = as_field(cmass) * jxw
    cd = as_field(cdiff) * jxw
    elem = np.einsum("eq,qi,qj->eij", cm, basis.values, basis.values, optimize=True)
    elem += np.einsum(
        "eq,qid,qjd->eij", cd, basis.gradients, basis.gradients, optimize=True
    )
    rows = np.repeat(mesh.conn, nloc, axis=1).reshape(-1)
    cols = np.tile(mesh.conn, (1, nloc)).reshape(-1)
    n = mesh.n_nodes
    mat = sp.coo_matrix((elem.reshape(-1), (rows, cols)), shape=(n, n))
    return mat.tocsr()
