"""Staggered GMLS discretization of ``-div(mu grad phi) = f`` on point clouds."""

from .basis import TaylorBasis, basis_size, multi_indices
from .geometry import (
    Annulus, ExtrudedAnnulus, PointCloud, PointKind, UnitSquare, all_dirichlet, all_neumann, discretize,
)
from .gmls import StencilError, StencilSet, build_stencils
from .neighbors import SpatialIndex, WeightKernel, build_neighborhood, select_epsilon
from .problems import (
    ConvergenceReport, dielectric_cylinder_problem, five_strip_problem, raster_problem, run_convergence,
    sine_problem, solve_problem,
)
from .system import MeanZero, PinPoint, assemble, fix_null_space, reconstruct_flux, solve

__version__ = "0.1.0"
