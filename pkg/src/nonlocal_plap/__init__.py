"""Nonlocal p-Laplacian energies with midpoint coefficients, solvers and limit checks."""

from .coefficient import ClosedForm, Coefficient, Mollifier, Sampled, Simple, midpoint_H, mollify, parse_coefficient, simple_approx
from .covering import Cover, CoverPiece, build_vitali_cover, partition_error
from .domain import Domain, Grid, build_grid, neighbor_pairs, shrink
from .energy import (PairIndicator, QuadratureScheme, ScalarField, energy_gradient, load, local_energy,
                     nonlocal_energy, nonlocal_form)
from .kernel import Family, Kernel, c_n, check_normalization
from .solver import SolveOptions, SolveResult, SolverError, solve_local, solve_nonlocal

__all__ = [
    "ClosedForm", "Coefficient", "Cover", "CoverPiece", "Domain", "Family", "Grid", "Kernel", "Mollifier",
    "PairIndicator", "QuadratureScheme", "Sampled", "ScalarField", "Simple", "SolveOptions", "SolveResult",
    "SolverError", "build_grid", "build_vitali_cover", "c_n", "check_normalization", "energy_gradient", "load",
    "local_energy", "midpoint_H", "mollify", "neighbor_pairs", "nonlocal_energy", "nonlocal_form",
    "parse_coefficient", "partition_error", "shrink", "simple_approx", "solve_local", "solve_nonlocal",
]
