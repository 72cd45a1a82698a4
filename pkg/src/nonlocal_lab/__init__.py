"""Numerical laboratory for restricted and spectral fractional Laplacians.

Submodules: ``kernels`` (closed forms), ``pv_eval`` (principal-value
quadrature), ``wos`` (walk-on-spheres Monte Carlo), ``ball_solver``,
``rates``, ``semilinear_ko``, ``spectral``, ``curvature`` and ``cli``.
"""

from .errors import (ConvergenceError, DomainError, IntegrabilityError, KOViolationError, LabError,
                     ResolutionError, SchemeViolationError)
from .kernels import BallGeometry, KernelParams

__all__ = [
    "BallGeometry", "ConvergenceError", "DomainError", "IntegrabilityError", "KOViolationError",
    "KernelParams", "LabError", "ResolutionError", "SchemeViolationError",
]
__version__ = "0.1.0"
