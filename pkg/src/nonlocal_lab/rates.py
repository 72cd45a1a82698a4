"""Boundary-exponent fitting and the boundary-rate experiments on the ball.

Two models are fitted by least squares in log-log coordinates,
``v = A d^a`` and ``v = A d^a log(1/d)``; both are scored by the coefficient
of determination of log v, so their r2 values are directly comparable.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .ball_solver import green_solve_ball, poisson_solve_ball
from .errors import DomainError
from .kernels import KernelParams
from .wos import WalkConfig, ball_domain, wos_field

# the default grid of the Monte Carlo route; deeper grids need the deterministic solver
WOS_GRID = tuple(np.geomspace(0.2, 0.002, 10))
# window where the pre-asymptotic corrections of the ball solutions fall below 0.05 in exponent
GREEN_GRID = tuple(np.geomspace(1e-2, 1e-5, 10))


@dataclass(frozen=True)
class RateFit:
    exponent: float
    log_factor: bool
    r2: float
    window: tuple[float, float]
    r2_alt: float = float("nan")


def _lsq(X: np.ndarray, y: np.ndarray, offset: np.ndarray) -> tuple[float, float]:
    A = np.column_stack([X, np.ones_like(X)])
    coef, *_ = np.linalg.lstsq(A, y - offset, rcond=None)
    resid = y - offset - A @ coef
    sst = float(np.sum((y - y.mean()) ** 2))
    # a flat response has sst at rounding level, where r2 carries no information
    flat = sst <= 1e-20 * len(y) * max(1.0, float(np.mean(y ** 2)))
    r2 = 1.0 if flat else 1.0 - float(np.sum(resid ** 2)) / sst
    return float(coef[0]), r2


def fit_rate(samples: Sequence[tuple[float, float]], allow_log: bool = True) -> RateFit:
    """Fit value ~ delta^a (optionally times log(1/delta)) and keep the better model."""
    if len(samples) < 6:
        raise DomainError(f"fit_rate needs at least 6 samples, got {len(samples)}")
    d = np.array([a for a, _ in samples], dtype=float)
    v = np.array([b for _, b in samples], dtype=float)
    if np.any(v <= 0) or not np.all(np.isfinite(v)):
        raise DomainError("fit_rate needs strictly positive finite values")
    if np.any(d <= 0) or np.any(d >= 1):
        raise DomainError("deltas must lie strictly inside (0, 1)")
    order = np.argsort(d)
    d, v = d[order], v[order]
    ratios = d[1:] / d[:-1]
    if np.ptp(np.log(ratios)) > 1e-6 * max(1.0, abs(float(np.mean(np.log(ratios))))):
        raise DomainError("deltas must form a geometric sequence")
    L, y = np.log(d), np.log(v)
    a_pow, r2_pow = _lsq(L, y, np.zeros_like(L))
    window = (float(d[0]), float(d[-1]))
    if not allow_log:
        return RateFit(a_pow, False, r2_pow, window)
    a_log, r2_log = _lsq(L, y, np.log(np.log(1.0 / d)))
    if r2_log > r2_pow:
        return RateFit(a_log, True, r2_log, window, r2_pow)
    return RateFit(a_pow, False, r2_pow, window, r2_log)


def expected_rate(mode: str, beta: float, s: float) -> tuple[float, bool]:
    """(exponent, log_factor) predicted for the ball experiments."""
    _check_mode(mode, beta, s)
    if mode == "datum":
        return -beta, False
    if beta < s:
        return s, False
    if beta == s:
        return s, True
    return 2 * s - beta, False


def _check_mode(mode: str, beta: float, s: float):
    if mode == "rhs":
        if not 0 < beta < 1 + s:
            raise DomainError(f"rhs mode needs 0 < beta < 1+s = {1 + s}, got beta={beta!r}")
    elif mode == "datum":
        if not 0 < beta < 1 - s:
            raise DomainError(f"datum mode needs 0 < beta < 1-s = {1 - s}, got beta={beta!r}")
    else:
        raise DomainError(f"mode must be 'rhs' or 'datum', got {mode!r}")


Solver = Callable[[str, float, KernelParams, np.ndarray], np.ndarray]


def green_solver(mode: str, beta: float, params: KernelParams, deltas: np.ndarray) -> np.ndarray:
    """Deterministic quadrature with the closed-form ball Green and Poisson kernels."""
    N = params.N
    out = []
    for d in deltas:
        x = np.zeros(N)
        x[0] = 1.0 - d
        if mode == "rhs":
            out.append(green_solve_ball(params, lambda dy: dy ** (-beta), x, of_delta=True))
        else:
            g = (lambda y: (np.linalg.norm(y, axis=1) - 1.0) ** (-beta))
            out.append(poisson_solve_ball(params, g, x))
    return np.array(out)


def make_wos_solver(cfg: WalkConfig) -> Solver:
    """Walk-on-spheres route; the source is clipped at delta_clip = min(grid) / 4."""

    def solve(mode: str, beta: float, params: KernelParams, deltas: np.ndarray) -> np.ndarray:
        N = params.N
        clip = float(np.min(deltas)) / 4
        grid = []
        for d in deltas:
            x = np.zeros(N)
            x[0] = 1.0 - d
            grid.append(x)
        if mode == "rhs":
            dom = ball_domain(lambda y: np.zeros(len(y)), N)
            f = (lambda y: np.maximum(1.0 - np.linalg.norm(y, axis=1), clip) ** (-beta))
        else:
            dom = ball_domain(lambda y: np.maximum(np.linalg.norm(y, axis=1) - 1.0, 1e-300) ** (-beta), N)
            f = None
        return np.array([e.mean for e in wos_field(dom, f, grid, params, cfg)])

    return solve


def rate_experiment(mode: str, beta: float, params: KernelParams, solver: Solver | str = "green",
                    grid: Sequence[float] | None = None, allow_log: bool = True) -> RateFit:
    """Run ``solver`` along a radius of the unit ball and fit the boundary exponent.

    rhs: f = delta^-beta in the ball, g = 0.  datum: g = (|y|-1)^-beta, f = 0.
    """
    _check_mode(mode, beta, params.s)
    if isinstance(solver, str):
        if solver == "green":
            solve, default = green_solver, GREEN_GRID
        elif solver == "wos":
            solve, default = make_wos_solver(WalkConfig(n_samples=20_000)), WOS_GRID
        else:
            raise DomainError(f"unknown solver {solver!r}")
    else:
        solve, default = solver, WOS_GRID
    deltas = np.asarray(default if grid is None else grid, dtype=float)
    values = solve(mode, beta, params, deltas)
    return fit_rate(list(zip(deltas.tolist(), np.asarray(values).tolist())), allow_log=allow_log)
