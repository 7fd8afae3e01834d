"""Finite element solver for unsteady 2D bioconvection flows.

The package couples an incompressible Navier-Stokes type flow (mini element,
P1+bubble velocity with P1 pressure) to a micro-organism concentration
transport equation (P1) with concentration-dependent viscosity.  Time
stepping is a decoupled three-level Crank-Nicolson Leap-Frog scheme with a
backward Euler startup step.  A manufactured-solution harness measures
errors and convergence rates.
"""

__version__ = "0.1.0"

from .mesh import TriMesh, generate_uniform
from .elements import QuadratureRule, make_quadrature
from .assembly import FeSpace, FieldCoeffs, ModelParams
from .scheme import RunConfig, TimeState, run

__all__ = [
    "TriMesh",
    "generate_uniform",
    "QuadratureRule",
    "make_quadrature",
    "FeSpace",
    "FieldCoeffs",
    "ModelParams",
    "RunConfig",
    "TimeState",
    "run",
]
