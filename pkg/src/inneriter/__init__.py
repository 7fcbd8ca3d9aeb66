"""GMRES and flexible GMRES with inner-iteration preconditioning for singular systems.

Set ``INNERITER_THREADS`` before the first import to pin the BLAS thread
count (it fills in the usual OpenMP/OpenBLAS/MKL variables when unset).
"""

import os as _os

if _os.environ.get("INNERITER_THREADS"):
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ.setdefault(_var, _os.environ["INNERITER_THREADS"])

from .krylov import (
    InnerSolveError,
    NumericalFailure,
    Preconditioner,
    SolveReport,
    Termination,
    fgmres,
    gmres,
    gmres_inner,
)
from .splittings import (
    InnerIterationPreconditioner,
    apply_Cl,
    classic_build,
    gss_build,
    hss_build,
    igss_build,
    ihss_build,
    stationary_run,
)
from .problems import SaddleProblem, load_problem, stokes_generate, structured_generate, verify_problem
from .analysis import disk_check, estimate_alpha_grid, index_of, select_inner_count, spectral_report

__all__ = [
    "InnerSolveError", "NumericalFailure", "Preconditioner", "SolveReport", "Termination",
    "fgmres", "gmres", "gmres_inner",
    "InnerIterationPreconditioner", "apply_Cl", "classic_build", "gss_build", "hss_build",
    "igss_build", "ihss_build", "stationary_run",
    "SaddleProblem", "load_problem", "stokes_generate", "structured_generate", "verify_problem",
    "disk_check", "estimate_alpha_grid", "index_of", "select_inner_count", "spectral_report",
]

__version__ = "0.1.0"
