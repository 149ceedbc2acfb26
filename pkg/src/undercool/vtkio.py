"""Legacy-VTK ASCII and CSV writers for meshes and nodal fields.

The formats are deliberately plain: VTK legacy text is readable by any
visualization tool without libraries, and the CSV mirrors the same nodal
values for scripting.  Numbers print with repr-level precision so outputs
are bit-stable across runs.
"""

from __future__ import annotations

import numpy as np

from .mesh import StructuredMesh

__all__ = ["write_mesh_vtk", "write_snapshot_vtk", "write_snapshot_csv"]

_CELL_TYPES = {(2, 1): 9, (2, 2): 28, (3, 1): 12}  # quad, biquadratic quad, hex

# local node order mapping from tensor ordering to VTK conventions
_VTK_ORDER = {
    (2, 1): [0, 1, 3, 2],
    (2, 2): [0, 2, 8, 6, 1, 5, 7, 3, 4],
    (3, 1): [0, 1, 3, 2, 4, 5, 7, 6],
}


def _fmt(x: float) -> str:
    return repr(float(x))


def write_mesh_vtk(mesh: StructuredMesh, path: str) -> None:
    """Unstructured-grid export of nodes and element connectivity."""
    order = _VTK_ORDER[(mesh.dim, mesh.order)]
    ctype = _CELL_TYPES[(mesh.dim, mesh.order)]
    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write("structured solidification mesh\nASCII\n")
        fh.write("DATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {mesh.n_nodes} double\n")
        for p in mesh.coords:
            x, y = p[0], p[1]
            z = p[2] if mesh.dim == 3 else 0.0
            fh.write(f"{_fmt(x)} {_fmt(y)} {_fmt(z)}\n")
        nloc = len(order)
        fh.write(f"CELLS {mesh.n_elements} {mesh.n_elements * (nloc + 1)}\n")
        for row in mesh.conn:
            fh.write(str(nloc) + " " + " ".join(str(int(row[i])) for i in order) + "\n")
        fh.write(f"CELL_TYPES {mesh.n_elements}\n")
        for _ in range(mesh.n_elements):
            fh.write(f"{ctype}\n")


def write_snapshot_vtk(
    mesh: StructuredMesh, fields: dict[str, np.ndarray], path: str, comment: str = ""
) -> None:
    """Structured-grid point-data snapshot of nodal fields."""
    npts = mesh.node_shape
    dims = (npts[0], npts[1], npts[2] if mesh.dim == 3 else 1)
    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write((comment or "solidification snapshot") + "\nASCII\n")
        fh.write("DATASET STRUCTURED_GRID\n")
        fh.write(f"DIMENSIONS {dims[0]} {dims[1]} {dims[2]}\n")
        fh.write(f"POINTS {mesh.n_nodes} double\n")
        for p in mesh.coords:
            x, y = p[0], p[1]
            z = p[2] if mesh.dim == 3 else 0.0
            fh.write(f"{_fmt(x)} {_fmt(y)} {_fmt(z)}\n")
        fh.write(f"POINT_DATA {mesh.n_nodes}\n")
        for name, values in fields.items():
            fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
            for v in values:
                fh.write(_fmt(v) + "\n")


def write_snapshot_csv(
    mesh: StructuredMesh, fields: dict[str, np.ndarray], path: str
) -> None:
    names = list(fields)
    cols = ["x", "y"] + (["z"] if mesh.dim == 3 else []) + names
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for i in range(mesh.n_nodes):
            row = [_fmt(c) for c in mesh.coords[i]]
            row += [_fmt(fields[n][i]) for n in names]
            fh.write(",".join(row) + "\n")
