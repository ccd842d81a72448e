"""Pseudo-spectral channel Navier-Stokes toolkit.

A doubly periodic Fourier x wall-bounded Chebyshev discretization of an
incompressible channel flow, instrumented with the norms, barotropic /
baroclinic decomposition, a-priori bound formulas, and functional-inequality
verifiers needed to monitor the regularity diagnostic |grad w_tilde|_2 along
simulated trajectories.
"""

__version__ = "0.1.0"

from .grid import Grid, make_grid
from .fields import (
    ScalarField,
    VectorField,
    diff,
    divergence,
    grad,
    grad_h,
    inner_l2,
    laplacian,
    laplacian_h,
    norm_lq,
    random_field,
    read_checkpoint,
    sobolev_norm,
    write_checkpoint,
)
from .decomposition import BarotropicField, baroclinic, vertical_average
from .stokes import ProjectionContext, bilinear_b, leray_project, stokes_apply, v_norm
from .solver import SimState, SolverConfig, exact_shear_solution, run, step

__all__ = [
    "Grid",
    "make_grid",
    "ScalarField",
    "VectorField",
    "diff",
    "divergence",
    "grad",
    "grad_h",
    "inner_l2",
    "laplacian",
    "laplacian_h",
    "norm_lq",
    "random_field",
    "read_checkpoint",
    "sobolev_norm",
    "write_checkpoint",
    "BarotropicField",
    "baroclinic",
    "vertical_average",
    "ProjectionContext",
    "bilinear_b",
    "leray_project",
    "stokes_apply",
    "v_norm",
    "SimState",
    "SolverConfig",
    "exact_shear_solution",
    "run",
    "step",
    "__version__",
]
