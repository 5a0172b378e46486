"""Semi-symmetric compatible linear connections on Finsler manifolds.

Pointwise assembly and closed-form solution of the compatibility equations
for a torsion of the form T(X, Y) = rho(Y) X - rho(X) Y, with contact
classification, intrinsic solvability checks and independent oracles.
"""

__version__ = "0.1.0"

from .ceq import SolveOutcome, SolverConfig, Status, solve_at_point  # noqa: E402
from .linalg import TolerancePolicy  # noqa: E402
from .metrics import MetricSpec, build, make_germ  # noqa: E402

__all__ = [
    "MetricSpec",
    "SolveOutcome",
    "SolverConfig",
    "Status",
    "TolerancePolicy",
    "build",
    "make_germ",
    "solve_at_point",
]
