"""Periodic homogenization of Stokes systems: cell problems, Dirichlet
solves on the unit square, two-scale expansions and convergence sweeps."""

from .cell import (CellGrid, CorrectorSet, EffectiveTensor, PeriodicField, compute_b_tensor,
                   compute_correctors, compute_dual_correctors, compute_effective_tensor,
                   solve_cell_stokes, verify_corrector_identities)
from .coefficients import CoefficientTensor, adjoint_coefficient, build_coefficient, verify_ellipticity
from .domain import (DomainField, DomainGrid, StokesProblem, check_compatibility, manufactured_problem,
                     solve_dirichlet_stokes, solve_homogenized)
from .norms import boundary_layer_integral, discrete_norm, fit_rate
from .study import run_convergence_study

__version__ = "0.1.0"
