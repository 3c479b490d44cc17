"""Piecewise linear surface finite elements for ``-Laplace u + u`` and a
state-constrained optimal control problem, with convergence experiments."""

from .surface import Torus, UnitSphere, surface_by_name
from .mesh import SurfaceMesh, build_icosphere, build_mesh, build_torus_mesh
from .fem import (FeFunction, MeasureData, assemble_load_l2, assemble_load_measure,
                  assemble_mass, assemble_operator, assemble_stiffness, interpolate_nodal)
from .solve import GreenProblem, SolverConfig, green_adjoint_check, green_solve
from .control import (Box, ControlProblem, FreeL2, PdasConfig, kkt_residuals, solve_pdas,
                      solve_pdas_sequence)
from .analysis import ErrorRecord, RateSpec, eoc, fit_rate_with_log, lifted_error
from .oracle import (HarmonicExpansion, LegendreReference, SpectralReference, fine_mesh_reference,
                     spectral_green)

__version__ = "0.1.0"
