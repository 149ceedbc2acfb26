"""Block-diagonal preconditioning for the coupled phase-field Jacobian.

The preconditioner keeps only the per-field diagonal blocks of the
linearized operator (one block-Jacobi iteration) and inverts each block
approximately: Jacobi or symmetric Gauss-Seidel sweeps, a geometric
multigrid V-cycle, or a sparse direct solve.  Blocks are assembled from a
frozen state and held fixed between rebuilds so the whole application is a
fixed linear operator, as right-preconditioned GMRES requires.

Gauss-Seidel comes in two orderings: lexicographic (triangular solves) and
multicolor, which updates one parity class of grid points at a time and is
the vectorized default; on these structured grids both are exact
Gauss-Seidel sweeps, just in different orders.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from numba import njit

from .assembly import assemble_field_matrix, frozen_quad_state
from .mesh import StructuredMesh
from .stepping import ThetaScheme

__all__ = ["PrecondConfig", "BlockPrecond", "build_precond", "apply_precond"]


@njit(cache=True, nogil=True)
def _csr_sgs_sweeps(indptr, indices, data, diag, x, b, sweeps):
    """Symmetric Gauss-Seidel in natural (lexicographic) ordering."""
    n = x.size
    for _ in range(sweeps):
        for i in range(n):
            s = b[i]
            for jj in range(indptr[i], indptr[i + 1]):
                j = indices[jj]
                if j != i:
                    s -= data[jj] * x[j]
            x[i] = s / diag[i]
        for i in range(n - 1, -1, -1):
            s = b[i]
            for jj in range(indptr[i], indptr[i + 1]):
                j = indices[jj]
                if j != i:
                    s -= data[jj] * x[j]
            x[i] = s / diag[i]
    return x


@dataclass
class PrecondConfig:
    enabled: bool = True
    kind: str = "vcycle"             # identity | jacobi | sgs | vcycle | direct
    sweeps: int = 2                  # smoother sweeps (pre and post for vcycle)
    cycles: int = 2                  # V-cycles per application
    levels: int = 4                  # maximum grid levels
    coarse_sweeps: int = 10          # SGS sweeps for the coarsest-level solve
    ordering: str = "lexicographic"  # lexicographic | multicolor
    rebuild: str = "step"            # step | newton

    def __post_init__(self):
        if self.kind not in ("identity", "jacobi", "sgs", "vcycle", "direct"):
            raise ValueError(f"unknown preconditioner kind '{self.kind}'")
        if self.ordering not in ("multicolor", "lexicographic"):
            raise ValueError(f"unknown ordering '{self.ordering}'")
        if self.rebuild not in ("step", "newton"):
            raise ValueError(f"unknown rebuild policy '{self.rebuild}'")


def _point_colors(shape: tuple[int, ...], period: int) -> list[np.ndarray]:
    """Parity classes of a structured point grid; same-class points never
    couple through an element when ``period`` exceeds the coupling range."""
    idx = np.arange(int(np.prod(shape)))
    cls = np.zeros_like(idx)
    stride = 1
    mult = 1
    for npts in shape:
        cls = cls + ((idx // stride) % npts % period) * mult
        stride *= npts
        mult *= period
    return [np.nonzero(cls == c)[0] for c in range(mult) if np.any(cls == c)]


class _GaussSeidel:
    """Symmetric Gauss-Seidel sweeps on one sparse block.

    Lexicographic ordering runs a compiled in-place CSR sweep; multicolor
    updates one parity class at a time with vectorized sub-products (the
    ordering that would parallelize, provided for comparison).
    """

    def __init__(self, mat: sp.csr_matrix, ordering: str,
                 shape: tuple[int, ...] | None, period: int):
        self.diag = mat.diagonal()
        if np.any(self.diag == 0.0):
            raise ValueError("zero diagonal entry in preconditioner block")
        self.ordering = ordering
        if ordering == "multicolor" and shape is not None:
            self.colors = _point_colors(shape, period)
            self.rows = [mat[c] for c in self.colors]
            self.dinv = [1.0 / self.diag[c] for c in self.colors]
        else:
            self.ordering = "lexicographic"
            mat = mat.sorted_indices()
            self.indptr = mat.indptr
            self.indices = mat.indices
            self.data = mat.data

    def sweep(self, x: np.ndarray, b: np.ndarray, n: int) -> np.ndarray:
        if self.ordering == "multicolor":
            for _ in range(n):
                for c, rows, dinv in zip(self.colors, self.rows, self.dinv):
                    x[c] += (b[c] - rows @ x) * dinv
                for c, rows, dinv in zip(
                    reversed(self.colors), reversed(self.rows), reversed(self.dinv)
                ):
                    x[c] += (b[c] - rows @ x) * dinv
        else:
            _csr_sgs_sweeps(self.indptr, self.indices, self.data, self.diag, x, b, n)
        return x


class _IdentitySolver:
    def apply(self, b):
        return b.copy()


class _JacobiSolver:
    def __init__(self, mat, sweeps):
        self.mat = mat
        self.dinv = 1.0 / mat.diagonal()
        self.sweeps = sweeps

    def apply(self, b):
        x = b * self.dinv
        for _ in range(self.sweeps - 1):
            x += (b - self.mat @ x) * self.dinv
        return x


class _SgsSolver:
    def __init__(self, mat, sweeps, ordering, shape, period):
        self.gs = _GaussSeidel(mat, ordering, shape, period)
        self.sweeps = sweeps

    def apply(self, b):
        return self.gs.sweep(np.zeros_like(b), b, self.sweeps)


class _DirectSolver:
    def __init__(self, mat):
        self.lu = spla.splu(mat.tocsc())

    def apply(self, b):
        return self.lu.solve(b)


def _interp_1d(npts: int) -> sp.csr_matrix:
    """Linear interpolation from the 2:1-coarsened point line."""
    nc = (npts - 1) // 2 + 1
    rows, cols, vals = [], [], []
    for i in range(npts):
        if i % 2 == 0:
            rows.append(i)
            cols.append(i // 2)
            vals.append(1.0)
        else:
            rows += [i, i]
            cols += [i // 2, i // 2 + 1]
            vals += [0.5, 0.5]
    return sp.csr_matrix((vals, (rows, cols)), shape=(npts, nc))


def _prolongation(shape: tuple[int, ...]) -> tuple[sp.csr_matrix, tuple[int, ...]]:
    mats = [_interp_1d(n) for n in shape]
    p = mats[0]
    for m in mats[1:]:
        p = sp.kron(m, p, format="csr")
    coarse = tuple((n - 1) // 2 + 1 for n in shape)
    return p, coarse


def _coarsenable(shape: tuple[int, ...]) -> bool:
    return all((n - 1) % 2 == 0 and n >= 5 for n in shape)


class _VCycleSolver:
    """Geometric V-cycle with Galerkin coarse operators."""

    def __init__(self, mat, cfg: PrecondConfig, shape, period):
        self.cfg = cfg
        self.mats = [mat]
        self.smoothers = [_GaussSeidel(mat, cfg.ordering, shape, period)]
        self.prolongs = []
        cur_shape = shape
        while len(self.mats) < cfg.levels and _coarsenable(cur_shape):
            p, cur_shape = _prolongation(cur_shape)
            coarse = (p.T @ self.mats[-1] @ p).tocsr()
            self.prolongs.append(p)
            self.mats.append(coarse)
            # Galerkin operators keep nearest-neighbor coupling: parity classes
            self.smoothers.append(_GaussSeidel(coarse, cfg.ordering, cur_shape, 2))

    def _cycle(self, level: int, b: np.ndarray) -> np.ndarray:
        gs = self.smoothers[level]
        if level == len(self.mats) - 1:
            return gs.sweep(np.zeros_like(b), b, self.cfg.coarse_sweeps)
        x = gs.sweep(np.zeros_like(b), b, self.cfg.sweeps)
        p = self.prolongs[level]
        resid = b - self.mats[level] @ x
        x += p @ self._cycle(level + 1, p.T @ resid)
        return gs.sweep(x, b, self.cfg.sweeps)

    def apply(self, b):
        x = self._cycle(0, b)
        for _ in range(self.cfg.cycles - 1):
            x += self._cycle(0, b - self.mats[0] @ x)
        return x


class BlockPrecond:
    """Approximate inverse applied blockwise to each field sub-vector.

    Field blocks are independent; when the block work is substantial they
    run on a small shared thread pool (the compiled sweeps release the GIL).
    """

    _pool = None

    def __init__(self, solvers: list, n_nodes: int):
        self.solvers = solvers
        self.n_nodes = n_nodes
        self.applications = 0
        self.threaded = len(solvers) > 1 and n_nodes >= 4096

    @classmethod
    def _executor(cls):
        if cls._pool is None:
            from concurrent.futures import ThreadPoolExecutor

            cls._pool = ThreadPoolExecutor(max_workers=2)
        return cls._pool

    def apply(self, v: np.ndarray) -> np.ndarray:
        self.applications += 1
        n = self.n_nodes
        out = np.empty_like(v)
        if self.threaded:
            futures = [
                self._executor().submit(s.apply, v[f * n : (f + 1) * n])
                for f, s in enumerate(self.solvers)
            ]
            for f, fut in enumerate(futures):
                out[f * n : (f + 1) * n] = fut.result()
        else:
            for f, solver in enumerate(self.solvers):
                out[f * n : (f + 1) * n] = solver.apply(v[f * n : (f + 1) * n])
        if not np.isfinite(out).all():
            raise FloatingPointError("preconditioner produced non-finite values")
        return out

    __call__ = apply


def build_precond(
    mesh: StructuredMesh,
    kernel,
    state: np.ndarray,
    scheme: ThetaScheme,
    config: PrecondConfig | None = None,
) -> BlockPrecond:
    """Assemble the field blocks from a frozen state and wrap inner solvers."""
    cfg = config or PrecondConfig()
    qs = frozen_quad_state(mesh, kernel, state, scheme)
    coeffs = kernel.precond_coefficients(qs, scheme)
    period = mesh.order + 1
    solvers = []
    for cmass, cdiff in coeffs:
        if cfg.kind == "identity":
            solvers.append(_IdentitySolver())
            continue
        mat = assemble_field_matrix(mesh, cmass, cdiff)
        if np.any(mat.diagonal() <= 0.0):
            raise ValueError("non-positive diagonal in preconditioner block")
        if cfg.kind == "jacobi":
            solvers.append(_JacobiSolver(mat, cfg.sweeps))
        elif cfg.kind == "sgs":
            solvers.append(
                _SgsSolver(mat, cfg.sweeps, cfg.ordering, mesh.node_shape, period)
            )
        elif cfg.kind == "direct":
            solvers.append(_DirectSolver(mat))
        else:
            solvers.append(_VCycleSolver(mat, cfg, mesh.node_shape, period))
    return BlockPrecond(solvers, mesh.n_nodes)


def apply_precond(precond: BlockPrecond, v: np.ndarray) -> np.ndarray:
    return precond.apply(v)
