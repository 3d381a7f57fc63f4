"""Diagonal implicit symplectic ERKN methods for oscillatory systems.

Integrators for q'' + M q = -grad U(q) (M symmetric positive semi-definite)
whose internal stages and updates propagate the linear oscillation exactly
through phi-functions of V = h^2 M, together with machinery to verify their
symplecticity and order, scan linear stability regions, and run benchmark
experiments on three reference problems.
"""

__version__ = "0.1.0"

from .integrator import SolveSettings, StageConvergenceError, State, Trajectory, integrate, step
from .phi import SpectralCache, apply_analytic, phi_scalar, spectral_decompose
from .problems import (
    Problem,
    classical_form,
    duffing_reference,
    make_duffing,
    make_problem,
    make_sine_gordon,
    make_stellar,
)
from .stability import classify_point, scan_region, stability_matrix
from .tableau import (
    DenominatorGuardError,
    MethodTableau,
    coefficient,
    get_method,
    method_names,
    rkn_limit,
    taylor_coefficients,
)
from .verification import jacobian_symplecticity, order_residual_decay, symplectic_residuals

__all__ = [
    "__version__",
    "SolveSettings", "StageConvergenceError", "State", "Trajectory",
    "integrate", "step",
    "SpectralCache", "apply_analytic", "phi_scalar", "spectral_decompose",
    "Problem", "classical_form", "duffing_reference", "make_duffing",
    "make_problem", "make_sine_gordon", "make_stellar",
    "classify_point", "scan_region", "stability_matrix",
    "DenominatorGuardError", "MethodTableau", "coefficient", "get_method",
    "method_names", "rkn_limit", "taylor_coefficients",
    "jacobian_symplecticity", "order_residual_decay", "symplectic_residuals",
]
