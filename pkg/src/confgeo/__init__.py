"""Conformal geodesics of 3-dimensional metrics and the torsion Lagrangian.

Modules
-------
dsl          metric expression language and metric specifications
jets         truncated multivariate Taylor arithmetic
geometry     Christoffel symbols, curvature and metric algebra at a point
geodesics    conformal geodesic equation, integrators, reparametrization
frenet       curve invariants and Lagrangians
variational  Euler-Lagrange operator, structural probes, discrete action
conformal    conformal rescaling and the divergence identity
suites, cli  verification suites and the command line
"""

__version__ = "0.1.0"

from .dsl import MetricSpec, builtin_metric, load_metric, parse_expression
from .errors import ConfgeoError, InputError, NumericalError
from .geodesics import CurveState, IntegratorConfig, Trajectory, integrate

__all__ = [
    "ConfgeoError",
    "CurveState",
    "InputError",
    "IntegratorConfig",
    "MetricSpec",
    "NumericalError",
    "Trajectory",
    "builtin_metric",
    "integrate",
    "load_metric",
    "parse_expression",
]
