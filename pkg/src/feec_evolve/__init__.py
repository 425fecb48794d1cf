"""Mixed finite element solvers for heat, wave and semi-linear problems.

The n-form unknown ``u`` lives in a discontinuous space and the flux
``sigma = grad u`` in an H(div) space (RT0, BDM1 or RT1) on uniformly
refined triangulations of the unit square. Time stepping is backward
Euler or Crank-Nicolson; errors are measured in Bochner norms against
manufactured solutions.
"""

from .assembly import ADMISSIBLE_PAIRS, MixedOperator, LoadAssembler, assemble_mixed
from .elements import FESpace, build_space, canonical_interpolation, element, l2_projection
from .errors import ConfigurationError, MeshError, NotSPDError, SolverError, StepError
from .mesh import SimplicialMesh, refine_uniform, unit_square_mesh
from .solvers import SaddleSolver, Scheme, Trajectory, time_grid

__version__ = "0.1.0"

__all__ = [
    "ADMISSIBLE_PAIRS",
    "ConfigurationError",
    "FESpace",
    "LoadAssembler",
    "MeshError",
    "MixedOperator",
    "NotSPDError",
    "SaddleSolver",
    "Scheme",
    "SimplicialMesh",
    "SolverError",
    "StepError",
    "Trajectory",
    "assemble_mixed",
    "build_space",
    "canonical_interpolation",
    "element",
    "l2_projection",
    "refine_uniform",
    "time_grid",
    "unit_square_mesh",
]
