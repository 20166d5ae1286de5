"""Backward stochastic difference equations on random-walk lattices.

The usual session is: build a lattice, pick a driver and a terminal
functional from the catalogs, run the backward solve, then interrogate the
result (dual tilts, fixed-point cross-check, approximation ladders).  The
heavy lifting lives in the submodules; this namespace just re-exports the
entry points that every script ends up importing.
"""

from .approximation import (
    inf_convolution,
    monotone_limit_experiment,
    refinement_experiment,
    uniform_limit_experiment,
)
from .drivers import make_driver, make_terminal, scale_terminal, shift_terminal
from .duality import dual_value, duality_gap, optimal_control, random_admissible_control
from .lattice import TimeGrid, build_lattice, verify_walk_conditions
from .picard import picard_solve
from .solver import (
    solution_residuals,
    solve_backward,
    z_bound,
    z_bound_certificate,
)

__version__ = "0.1.0"

__all__ = [
    "TimeGrid",
    "build_lattice",
    "verify_walk_conditions",
    "make_driver",
    "make_terminal",
    "scale_terminal",
    "shift_terminal",
    "solve_backward",
    "solution_residuals",
    "z_bound",
    "z_bound_certificate",
    "dual_value",
    "duality_gap",
    "optimal_control",
    "random_admissible_control",
    "picard_solve",
    "inf_convolution",
    "monotone_limit_experiment",
    "uniform_limit_experiment",
    "refinement_experiment",
    "__version__",
]
