"""Closed-form constants, kernels and explicit solutions on balls.

Everything here is a pure function of its arguments and serves as ground
truth for the numerical solvers.  Points are arrays whose last axis has
length ``N``; functions broadcast over leading axes.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import pi

import numpy as np
from scipy.special import betainc, gamma, gammaln, hyp2f1

from .errors import DomainError


@dataclass(frozen=True)
class KernelParams:
    """Dimension ``N`` and fractional order ``s`` of the operator."""

    N: int
    s: float

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise DomainError(f"N must be an integer >= 1, got N={self.N!r}")
        if not 0.0 < self.s < 1.0:
            raise DomainError(f"s must lie in (0, 1), got s={self.s!r}")


@dataclass(frozen=True)
class BallGeometry:
    center: tuple[float, ...]
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise DomainError(f"radius must be positive, got radius={self.radius!r}")

    @property
    def c(self) -> np.ndarray:
        return np.asarray(self.center, dtype=float)


@dataclass(frozen=True)
class Constants:
    C: float
    c: float
    gamma: float


def C_Ns(N: int, s: float) -> float:
    """Normalisation of the singular-integral definition of (-Lap)^s."""
    return float(4.0 ** s * gamma(N / 2 + s) * s / (pi ** (N / 2) * gamma(1 - s)))


def c_Ns(N: int, s: float) -> float:
    """Mass normalisation of the exit kernel (and of the ball Poisson kernel)."""
    return float(gamma(N / 2) * np.sin(pi * s) / pi ** (1 + N / 2))


def torsion_constant(N: int, s: float) -> float:
    """Gamma(N/2) / (4^s Gamma(N/2+s) Gamma(1+s))."""
    return float(np.exp(gammaln(N / 2) - 2 * s * np.log(2.0) - gammaln(N / 2 + s) - gammaln(1 + s)))


def gamma_radius(N: int, s: float, r):
    """Mean-value correction constant for a ball of radius r (vectorised in r)."""
    return torsion_constant(N, s) * np.asarray(r, dtype=float) ** (2 * s)


def normalizing_constants(params: KernelParams, r: float) -> Constants:
    if not r > 0:
        raise DomainError(f"r must be positive, got r={r!r}")
    N, s = params.N, params.s
    return Constants(C=C_Ns(N, s), c=c_Ns(N, s), gamma=float(gamma_radius(N, s, r)))


def _norm(x) -> np.ndarray:
    return np.linalg.norm(np.asarray(x, dtype=float), axis=-1)


def exit_kernel_density(params: KernelParams, ball: BallGeometry, y) -> np.ndarray:
    """Density of the landing point of a jump leaving ``ball``; zero inside it."""
    N, s = params.N, params.s
    d = _norm(np.asarray(y, dtype=float) - ball.c)
    r = ball.radius
    out = np.zeros_like(d)
    m = d > r
    out[m] = c_Ns(N, s) * r ** (2 * s) / (d[m] ** N * (d[m] ** 2 - r ** 2) ** s)
    return out if out.ndim else float(out)


def exit_radius_cdf(s: float, rho) -> np.ndarray:
    """P(|Y - x0| / r <= rho) for the exit law; equals I_{1-rho^-2}(1-s, s)."""
    rho = np.asarray(rho, dtype=float)
    z = np.where(rho > 1, 1.0 - 1.0 / np.maximum(rho, 1.0) ** 2, 0.0)
    return betainc(1 - s, s, z)


def ball_poisson_kernel(params: KernelParams, x, y) -> np.ndarray:
    """Poisson kernel of the unit ball centred at the origin (|x| < 1 < |y|)."""
    N, s = params.N, params.s
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    nx, ny = _norm(x), _norm(y)
    if np.any(nx >= 1):
        raise DomainError("ball_poisson_kernel needs |x| < 1")
    if np.any(ny <= 1):
        raise DomainError("ball_poisson_kernel needs |y| > 1")
    d = _norm(x - y)
    return c_Ns(N, s) / d ** N * ((1 - nx ** 2) / (ny ** 2 - 1)) ** s


def ball_martin_kernel(params: KernelParams, x, theta) -> np.ndarray:
    """Martin kernel of the unit ball without its multiplicative constant.

    Only ratios of this kernel are meaningful.
    """
    x = np.asarray(x, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if np.any(_norm(x) >= 1):
        raise DomainError("ball_martin_kernel needs |x| < 1")
    d = _norm(x - theta)
    if np.any(d == 0):
        raise DomainError("ball_martin_kernel is singular at x = theta")
    return (1 - _norm(x) ** 2) ** params.s / d ** params.N


def martin_mass(params: KernelParams, x) -> np.ndarray:
    """Surface integral over the unit sphere of the constant-free Martin kernel.

    Uses the classical identity for the harmonic Poisson kernel:
    the integral of |x - theta|^-N over the sphere is |S^{N-1}| / (1 - |x|^2).
    """
    from ._quad import sphere_area

    r2 = _norm(x) ** 2
    if np.any(r2 >= 1):
        raise DomainError("martin_mass needs |x| < 1")
    return sphere_area(params.N) * (1 - r2) ** (params.s - 1)


def torsion_ball(params: KernelParams, ball: BallGeometry, x) -> np.ndarray:
    """Solution of (-Lap)^s v = 1 in ``ball``, v = 0 outside."""
    d2 = _norm(np.asarray(x, dtype=float) - ball.c) ** 2
    out = torsion_constant(params.N, params.s) * np.maximum(ball.radius ** 2 - d2, 0.0) ** params.s
    return out if out.ndim else float(out)


def explicit_sharmonic(params: KernelParams, sigma: float, x) -> np.ndarray:
    """The s-harmonic family u_sigma on the unit ball, 0 < sigma <= 1 - s.

    Inside: c(N,s) (1-|x|^2)^-sigma.  Outside: c(N,s+sigma) (|x|^2-1)^-sigma,
    or 0 in the critical case sigma = 1 - s.
    """
    N, s = params.N, params.s
    crit = 1.0 - s
    if not 0.0 < sigma <= crit + 1e-15:
        raise DomainError(f"sigma must lie in (0, 1-s] = (0, {crit}], got sigma={sigma!r}")
    r2 = _norm(x) ** 2
    if np.any(r2 == 1.0):
        raise DomainError("explicit_sharmonic has a pole on the unit sphere")
    inside = r2 < 1
    out = np.empty_like(r2)
    out[inside] = c_Ns(N, s) * (1 - r2[inside]) ** (-sigma)
    if abs(sigma - crit) <= 1e-15:
        out[~inside] = 0.0
    else:
        out[~inside] = c_Ns(N, s + sigma) * (r2[~inside] - 1) ** (-sigma)
    return out if out.ndim else float(out)


def _green_inner(N: int, s: float, r0):
    """int_0^r0 t^(s-1) (1+t)^(-N/2) dt."""
    r0 = np.asarray(r0, dtype=float)
    if abs(N - 2 * s) < 1e-9:
        # logarithmic case N = 2s, where the hypergeometric route loses accuracy
        return 2.0 * np.arcsinh(np.sqrt(r0))
    return r0 ** s / s * hyp2f1(N / 2, s, s + 1, -r0)


def ball_green_function(params: KernelParams, x, y) -> np.ndarray:
    """Green function of the unit ball for the restricted operator (x != y, both inside).

    kappa(N,s) |x-y|^{2s-N} int_0^{r0} t^{s-1}(t+1)^{-N/2} dt with
    r0 = (1-|x|^2)(1-|y|^2)/|x-y|^2 and kappa = Gamma(N/2)/(4^s pi^{N/2} Gamma(s)^2).
    """
    N, s = params.N, params.s
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    nx2, ny2 = _norm(x) ** 2, _norm(y) ** 2
    if np.any(nx2 >= 1) or np.any(ny2 >= 1):
        raise DomainError("ball_green_function needs both points inside the unit ball")
    d = _norm(x - y)
    if np.any(d == 0):
        raise DomainError("ball_green_function is singular at x = y")
    return green_from_parts(params, d, 1 - nx2, 1 - ny2)


def green_from_parts(params: KernelParams, d, ax, ay):
    """Ball Green function from |x-y| = d, 1-|x|^2 = ax and 1-|y|^2 = ay.

    Lets callers that know these quantities more accurately than the points
    themselves (e.g. along a ray) avoid cancellation.
    """
    N, s = params.N, params.s
    d = np.asarray(d, dtype=float)
    kap = np.exp(gammaln(N / 2) - 2 * s * np.log(2.0) - (N / 2) * np.log(pi) - 2 * gammaln(s))
    r0 = np.asarray(ax) * np.asarray(ay) / d ** 2
    return kap * d ** (2 * s - N) * _green_inner(N, s, r0)
