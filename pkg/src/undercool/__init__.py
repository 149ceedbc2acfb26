"""Fully implicit finite-element phase-field solver for dendritic solidification."""

from .assembly import (
    StateHistory,
    TimestepResidual,
    assemble_field_matrix,
    assemble_residual,
    join_fields,
    split_fields,
)
from .errors import ConfigError, NonFiniteResidualError
from .krylov import GmresConfig, GmresResult, gmres_solve
from .mesh import StructuredMesh, build_mesh, eval_basis, gauss_rule
from .models import AlloyKernel, AlloyParams, FreeGrowthKernel, FreeGrowthParams
from .newton import NewtonConfig, NewtonReport, forcing_update, jfnk_matvec, newton_solve
from .precond import BlockPrecond, PrecondConfig, apply_precond, build_precond
from .stepping import ThetaScheme, TimescaleReport, lagged_rate, timescales

__version__ = "0.1.0"

__all__ = [
    "AlloyKernel",
    "AlloyParams",
    "BlockPrecond",
    "ConfigError",
    "FreeGrowthKernel",
    "FreeGrowthParams",
    "GmresConfig",
    "GmresResult",
    "NewtonConfig",
    "NewtonReport",
    "NonFiniteResidualError",
    "PrecondConfig",
    "StateHistory",
    "StructuredMesh",
    "ThetaScheme",
    "TimescaleReport",
    "TimestepResidual",
    "apply_precond",
    "assemble_field_matrix",
    "assemble_residual",
    "build_mesh",
    "build_precond",
    "eval_basis",
    "forcing_update",
    "gauss_rule",
    "gmres_solve",
    "jfnk_matvec",
    "join_fields",
    "lagged_rate",
    "newton_solve",
    "split_fields",
    "timescales",
    "__version__",
]
