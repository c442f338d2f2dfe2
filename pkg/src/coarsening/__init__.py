"""Solvers and diagnostics for the linear (Carr-Penrose) coarsening model.

The model transports a size density on the half line with velocity
``x/Lambda(t) - 1``, where ``Lambda`` is fixed by conservation of the first
moment.  Submodules:

``profiles``      initial data and their normalisation
``coeffs``        the linear-drift coefficient recursion used by the bridges
``cp_exact``      exact characteristic solution of the undiffused model
``inviscid``      small-noise model via a scalar closure
``diffusive``     finite-volume solvers with diffusion
``bridge``        conditioned-path Monte Carlo
``analysis``      diagnostics: log-concavity, rates, recursions, studies
``cli``           config-driven runner
"""

from .errors import (
    CoarseningError,
    ConfigError,
    ConstraintViolationError,
    InvalidDataError,
    InvalidParameterError,
    NumericError,
)
from .profiles import Profile, make_gaussian, make_point_mass, make_self_similar, make_tabulated
from .trajectory import Trajectory

__version__ = "0.1.0"

__all__ = [
    "CoarseningError",
    "ConfigError",
    "ConstraintViolationError",
    "InvalidDataError",
    "InvalidParameterError",
    "NumericError",
    "Profile",
    "Trajectory",
    "make_gaussian",
    "make_point_mass",
    "make_self_similar",
    "make_tabulated",
]
