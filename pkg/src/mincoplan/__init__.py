"""Linear-time minimum-control splines and corridor/SE(3) trajectory optimization."""

from . import (
    _backend,
    banded,
    elimination,
    errors,
    flatness,
    geometry,
    minco,
    penalty,
    solver,
)
from .elimination import BallMap, PolytopeMap, TimeMap
from .errors import (
    DegeneratePolytope,
    DimensionMismatch,
    DomainViolation,
    Infeasible,
    MincoplanError,
    NonPositiveDuration,
    NoOverlap,
    OutOfDomain,
    SingularMatrix,
    SingularThrust,
    SingularYaw,
)
from .geometry import Ball, Corridor, HPolytope, random_corridor, validate_corridor
from .minco import Trajectory, construct, control_effort, propagate_gradient
from .penalty import ConstraintEntry, ConstraintSet, integrate_penalty
from .solver import (
    LBFGSParams,
    OptimizeResult,
    Problem,
    ProblemSpec,
    lbfgs_minimize,
    narrow_gap_scene,
    optimize_corridor,
    optimize_se3,
)

__version__ = "0.1.0"
