"""Structured quadrilateral/hexahedral meshes and Lagrange basis tables.

Meshes are logically Cartesian grids of axis-aligned rectangular elements:
bilinear (Q1) or biquadratic (Q2) quadrilaterals in 2D, trilinear hexahedra
in 3D.  Nodes and elements are ordered lexicographically (x fastest), which
makes distance-1 element coloring a parity pattern and keeps every element
congruent, so a single basis table serves the whole mesh.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "StructuredMesh",
    "QuadratureRule",
    "BasisEval",
    "build_mesh",
    "gauss_rule",
    "eval_basis",
]


@dataclass(frozen=True)
class QuadratureRule:
    """Tensor-product Gauss rule on the reference element [-1, 1]^dim."""

    points: np.ndarray   # (nq, dim)
    weights: np.ndarray  # (nq,)

    @property
    def n_points(self) -> int:
        return self.weights.size


@dataclass
class BasisEval:
    """Shape-function data at the quadrature points of one element.

    All elements of a mesh are congruent axis-aligned boxes, so the same
    table applies everywhere; ``gradients`` are already mapped to physical
    space and ``jxw`` carries the Jacobian determinant times the weight.
    """

    values: np.ndarray     # (nq, nloc)
    gradients: np.ndarray  # (nq, nloc, dim)
    jxw: np.ndarray        # (nq,)


def gauss_rule(dim: int, points_per_axis: int = 3) -> QuadratureRule:
    x, w = np.polynomial.legendre.leggauss(points_per_axis)
    grids = np.meshgrid(*([x] * dim), indexing="ij")
    # x varies fastest to match node ordering
    pts = np.stack([g.reshape(-1) for g in reversed(grids)], axis=1)
    wgrids = np.meshgrid(*([w] * dim), indexing="ij")
    wts = np.ones(points_per_axis**dim)
    for g in wgrids:
        wts = wts * g.reshape(-1)
    return QuadratureRule(points=pts, weights=wts)


def _lagrange_1d(order: int, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Values and derivatives of the 1D Lagrange basis on [-1, 1]."""
    x = np.asarray(x, dtype=float)
    if order == 1:
        vals = np.stack([(1.0 - x) / 2.0, (1.0 + x) / 2.0], axis=-1)
        ders = np.stack([-0.5 * np.ones_like(x), 0.5 * np.ones_like(x)], axis=-1)
    elif order == 2:
        vals = np.stack(
            [x * (x - 1.0) / 2.0, 1.0 - x * x, x * (x + 1.0) / 2.0], axis=-1
        )
        ders = np.stack([x - 0.5, -2.0 * x, x + 0.5], axis=-1)
    else:
        raise ValueError(f"unsupported element order {order}")
    return vals, ders


@dataclass
class StructuredMesh:
    dim: int
    extents: tuple[float, ...]
    counts: tuple[int, ...]
    order: int
    spacing: tuple[float, ...]
    node_shape: tuple[int, ...]            # grid points per axis
    coords: np.ndarray                     # (n_nodes, dim)
    conn: np.ndarray                       # (n_elements, nloc), tensor-ordered
    boundary: np.ndarray                   # (n_nodes,) bool
    colors: list[np.ndarray] = field(default_factory=list)
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def n_nodes(self) -> int:
        return self.coords.shape[0]

    @property
    def n_elements(self) -> int:
        return self.conn.shape[0]

    @property
    def nodes_per_element(self) -> int:
        return self.conn.shape[1]

    def quadrature(self, points_per_axis: int = 3) -> QuadratureRule:
        key = ("rule", points_per_axis)
        if key not in self._cache:
            self._cache[key] = gauss_rule(self.dim, points_per_axis)
        return self._cache[key]

    def basis(self, rule: QuadratureRule | None = None) -> BasisEval:
        rule = rule or self.quadrature()
        key = ("basis", id(rule))
        if key not in self._cache:
            self._cache[key] = _tabulate_basis(self, rule)
        return self._cache[key]

    def gauss_coords(self, rule: QuadratureRule | None = None) -> np.ndarray:
        """Physical coordinates of quadrature points, shape (n_elements, nq, dim)."""
        rule = rule or self.quadrature()
        key = ("gauss_coords", id(rule))
        if key not in self._cache:
            origins = self.coords[self.conn[:, 0]]  # lowest-corner node
            h = np.asarray(self.spacing)
            local = (rule.points + 1.0) / 2.0 * h  # (nq, dim)
            self._cache[key] = origins[:, None, :] + local[None, :, :]
        return self._cache[key]

    def integration_weights(self, rule: QuadratureRule | None = None) -> np.ndarray:
        """Nodal weights w with w @ u == integral of the FE field u."""
        rule = rule or self.quadrature()
        key = ("intw", id(rule))
        if key not in self._cache:
            b = self.basis(rule)
            per_elem = b.jxw @ b.values  # (nloc,)
            w = np.bincount(
                self.conn.reshape(-1),
                weights=np.broadcast_to(per_elem, self.conn.shape).reshape(-1),
                minlength=self.n_nodes,
            )
            self._cache[key] = w
        return self._cache[key]

    def conn_flat(self) -> np.ndarray:
        if "conn_flat" not in self._cache:
            self._cache["conn_flat"] = self.conn.reshape(-1)
        return self._cache["conn_flat"]


def _tabulate_basis(mesh: StructuredMesh, rule: QuadratureRule) -> BasisEval:
    order = mesh.order
    n1 = order + 1
    vals1, ders1 = zip(
        *[_lagrange_1d(order, rule.points[:, a]) for a in range(mesh.dim)]
    )
    nq = rule.n_points
    nloc = n1**mesh.dim
    values = np.ones((nq, nloc))
    gradients = np.zeros((nq, nloc, mesh.dim))
    # local node (jx, jy[, jz]) -> index jx + n1*jy + n1^2*jz
    for loc in range(nloc):
        idx = [(loc // n1**a) % n1 for a in range(mesh.dim)]
        v = np.ones(nq)
        for a in range(mesh.dim):
            v = v * vals1[a][:, idx[a]]
        values[:, loc] = v
        for a in range(mesh.dim):
            g = np.ones(nq)
            for b in range(mesh.dim):
                tab = ders1[b] if b == a else vals1[b]
                g = g * tab[:, idx[b]]
            # affine map scales each axis by h_a / 2
            gradients[:, loc, a] = g * (2.0 / mesh.spacing[a])
    detj = np.prod([h / 2.0 for h in mesh.spacing])
    return BasisEval(values=values, gradients=gradients, jxw=rule.weights * detj)


def build_mesh(
    dim: int,
    extents,
    counts,
    order: int = 1,
) -> StructuredMesh:
    """Build a structured mesh of Q1/Q2 quads (2D) or Q1 hexes (3D).

    Node and element orderings are lexicographic with x fastest.  Element
    colors are the 2^dim parity classes, a distance-1 coloring of the
    element graph (same-class elements share no node).
    """
    if dim not in (2, 3):
        raise ValueError("dimension must be 2 or 3")
    if order not in (1, 2):
        raise ValueError("element order must be 1 (Q1) or 2 (Q2)")
    if dim == 3 and order != 1:
        raise ValueError("3D meshes support order 1 only")
    extents = tuple(float(e) for e in extents)
    counts = tuple(int(c) for c in counts)
    if len(extents) != dim or len(counts) != dim:
        raise ValueError("extents and counts must have one entry per axis")
    if any(e <= 0.0 for e in extents):
        raise ValueError("extents must be positive")
    if any(c < 1 for c in counts):
        raise ValueError("element counts must be at least 1")

    spacing = tuple(e / c for e, c in zip(extents, counts))
    npts = tuple(order * c + 1 for c in counts)

    axes = [np.linspace(0.0, extents[a], npts[a]) for a in range(dim)]
    grids = np.meshgrid(*reversed(axes), indexing="ij")
    coords = np.stack([g.reshape(-1) for g in reversed(grids)], axis=1)

    n1 = order + 1
    nloc = n1**dim
    elem_grid = [np.arange(c) for c in counts]
    emesh = np.meshgrid(*reversed(elem_grid), indexing="ij")
    eidx = [g.reshape(-1) for g in reversed(emesh)]  # per-axis element index
    n_elements = eidx[0].size

    # node id of local (jx, jy[, jz]) inside element (ex, ey[, ez])
    conn = np.empty((n_elements, nloc), dtype=np.int64)
    strides = [1, npts[0], npts[0] * npts[1] if dim == 3 else 0]
    for loc in range(nloc):
        jdx = [(loc // n1**a) % n1 for a in range(dim)]
        nid = np.zeros(n_elements, dtype=np.int64)
        for a in range(dim):
            nid += (order * eidx[a] + jdx[a]) * strides[a]
        conn[:, loc] = nid

    boundary = np.zeros(coords.shape[0], dtype=bool)
    for a in range(dim):
        boundary |= np.isclose(coords[:, a], 0.0) | np.isclose(
            coords[:, a], extents[a]
        )

    color_id = np.zeros(n_elements, dtype=np.int64)
    for a in range(dim):
        color_id += (eidx[a] % 2) << a
    colors = [
        np.nonzero(color_id == c)[0]
        for c in range(2**dim)
        if np.any(color_id == c)
    ]

    return StructuredMesh(
        dim=dim,
        extents=extents,
        counts=counts,
        order=order,
        spacing=spacing,
        node_shape=npts,
        coords=coords,
        conn=conn,
        boundary=boundary,
        colors=colors,
    )


def eval_basis(
    mesh: StructuredMesh, element_id: int, rule: QuadratureRule | None = None
) -> BasisEval:
    """Basis values/gradients/weights for one element (identical for all)."""
    if not 0 <= element_id < mesh.n_elements:
        raise IndexError(f"element id {element_id} out of range")
    return mesh.basis(rule)
