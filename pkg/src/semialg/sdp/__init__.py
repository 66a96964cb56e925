"""Semidefinite programming: interior-point solver and SDPA sparse-format I/O."""

from .sdpa import (
    ReducedForm,
    SdpaParseError,
    export_sdpa,
    import_sdpa,
    import_solution,
    paired_instance,
    reduce_instance,
    write_solution,
)
from .solver import Residuals, SdpSolution, SolverConfig, Status, nullspace_parametrization, solve

__all__ = [
    "ReducedForm",
    "Residuals",
    "SdpSolution",
    "SdpaParseError",
    "SolverConfig",
    "Status",
    "export_sdpa",
    "import_sdpa",
    "import_solution",
    "nullspace_parametrization",
    "paired_instance",
    "reduce_instance",
    "solve",
    "write_solution",
]
