"""Mean-value sets of divergence-form elliptic operators on uniform grids.

The mean-value set ``D_R(x0)`` is the noncontact set of an obstacle problem
whose obstacle is the discrete Green's function with pole ``x0``.  The
package also minimizes the one-phase Bernoulli functional and measures the
free-boundary constants its theory predicts.
"""
from .bernoulli import (BernoulliState, minimize_bernoulli, nondegeneracy_check,
                        slab_setup, verify_local_minimality)
from .coefficients import CoefficientField
from .config import ScenarioConfig, parse_config
from .errors import (AssemblyError, CoefficientError, ConfigError, ConvergenceError,
                     DomainMarginError, GridError, MVSetsError, PreconditionError)
from .grid import GridSpec, build_grid
from .linalg import greens_function, make_subharmonic
from .mvset import MeanValueFamily, MeanValueSet, check_nesting, compute_family, mv_average
from .obstacle import ObstacleProblem, kkt_residuals, solve_mvt_problem, solve_obstacle
from .operator import build_operator

__version__ = "0.1.0"

__all__ = [
    "AssemblyError", "BernoulliState", "CoefficientError", "CoefficientField", "ConfigError",
    "ConvergenceError", "DomainMarginError", "GridError", "GridSpec", "MVSetsError",
    "MeanValueFamily", "MeanValueSet", "ObstacleProblem", "PreconditionError",
    "ScenarioConfig", "build_grid", "build_operator", "check_nesting", "compute_family",
    "greens_function", "kkt_residuals", "make_subharmonic", "minimize_bernoulli",
    "mv_average", "nondegeneracy_check", "parse_config", "slab_setup", "solve_mvt_problem",
    "solve_obstacle", "verify_local_minimality",
]
