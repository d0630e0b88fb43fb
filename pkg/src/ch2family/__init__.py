"""Linear-velocity solution family of the two-component Camassa-Holm system.

The velocity ``u = c(t) x + b(t)`` and the truncated quadratic density
``rho^2 = max(q0 + q1 x + q2 x^2, 0)`` reduce the PDE system to a small ODE
system in time. This package integrates it, evaluates the fields, checks
them against the PDEs by residuals, and classifies blowup versus global
existence.
"""

from .blowup import Case, ClassificationVerdict, classify, detect_singularity
from .dynamics import FamilyParams, FamilyTrajectory, integrate_family, rho0_closed_form
from .errors import Ch2Error
from .fields import DensityProfile, Geometry, evaluate_grid, profile_at, support_of
from .ode_engine import IntegratorConfig, IvpProblem, Termination, integrate
from .verification import ResidualReport, verify_full

__all__ = [
    "Case", "ClassificationVerdict", "classify", "detect_singularity",
    "FamilyParams", "FamilyTrajectory", "integrate_family", "rho0_closed_form",
    "Ch2Error", "DensityProfile", "Geometry", "evaluate_grid", "profile_at", "support_of",
    "IntegratorConfig", "IvpProblem", "Termination", "integrate",
    "ResidualReport", "verify_full",
]
__version__ = "0.1.0"
