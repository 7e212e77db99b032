"""Rotating periodic solutions of the forced planar N-pendulum.

Action minimization over trigonometric loops, the constants behind the
multiplicity bounds, torus constraint algebra, and ODE certification.
"""

from .action import ActionEvaluator, action, action_gradient, action_hessian_fd
from .loopspace import LoopPath, WindingVector, distance_mod_symmetries, time_shift, validate_winding
from .model import Forcing, PendulumParams, derive_coefficients
from .solver import RotationProblem, SolverConfig, census, dedupe, minimize, seed_plan, solve_critical
from .verify import certify, integrate

__version__ = "0.1.0"

__all__ = [
    "ActionEvaluator",
    "Forcing",
    "LoopPath",
    "PendulumParams",
    "RotationProblem",
    "SolverConfig",
    "WindingVector",
    "action",
    "action_gradient",
    "action_hessian_fd",
    "census",
    "certify",
    "dedupe",
    "derive_coefficients",
    "distance_mod_symmetries",
    "integrate",
    "minimize",
    "seed_plan",
    "solve_critical",
    "time_shift",
    "validate_winding",
]
