"""Rational compression of waveguide DtN maps into finite-difference grids.

The pipeline: build a transverse operator and its scalar DtN function
(:mod:`operators`), fit a low-order rational approximant to the matrix
function's action (:mod:`rkfit`), convert the fit into complex three-point
grid steps (:mod:`gridgen`), and reproduce the convergence and resonance
studies (:mod:`harness`).
"""

from . import errors
from .gridgen import (FdGrid, cf_eval, eval_extended, fd_solve, grid_pencil,
                      rkfun_from_grid, to_contfrac)
from .harness import (
    ConvergenceReport,
    ExperimentConfig,
    build_setup,
    export_grid,
    fit_sqrt_rate,
    nyquist_count,
    predicted_rate_zolotarev,
    run_experiment,
)
from .operators import (
    DtnSpec,
    Operator,
    SpectralIntervals,
    branch_sqrt,
    build_operator,
    count_real_poles,
    dtn_scalar,
    locate_resonances,
)
from .rkfit import FitReport, Rkfun, eval_rkfun, rkfit

__version__ = "0.1.0"

__all__ = [
    "ConvergenceReport",
    "DtnSpec",
    "ExperimentConfig",
    "FdGrid",
    "FitReport",
    "Operator",
    "Rkfun",
    "SpectralIntervals",
    "branch_sqrt",
    "build_operator",
    "build_setup",
    "cf_eval",
    "eval_extended",
    "count_real_poles",
    "dtn_scalar",
    "errors",
    "eval_rkfun",
    "export_grid",
    "fd_solve",
    "fit_sqrt_rate",
    "grid_pencil",
    "locate_resonances",
    "nyquist_count",
    "predicted_rate_zolotarev",
    "rkfit",
    "rkfun_from_grid",
    "run_experiment",
    "to_contfrac",
]
