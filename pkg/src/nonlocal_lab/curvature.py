"""Nonlocal directional and mean curvatures of graphs x_N = f(x').

With E = {x_N <= f(x')} the directional curvature in the direction e is

    K_{s,e} = 2 int_0^inf rho^{N-2} int_0^{f(rho e)} (rho^2 + h^2)^{-s-N/2} dh drho
            = 2 int_0^inf rho^{-1-2s} F(f(rho e) / rho) drho,

where F(t) = int_0^t (1 + tau^2)^{-s-N/2} dtau.  With h = rho tan(tau), F is
an incomplete beta function, evaluated in closed form.  The outer integral
has a Taylor core at rho = 0 (where F(f/rho) ~ f''/2 rho) and a tail mapped
through rho = eta v^{-1/(2s)}.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.special import beta as beta_fn
from scipy.special import betainc, hyp2f1

from . import _quad
from .errors import ConvergenceError, DomainError, LabError

# relative radius of the Taylor core of the outer integral
CORE = 1e-4


class ConstructionError(LabError, ValueError):
    """The prescribed-extrema construction received unusable direction sets."""


@dataclass(frozen=True)
class GraphSurface:
    """Graph of f over R^{N-1} with f(0) = 0 and grad f(0) = 0.

    ``f`` maps an (n, N-1) array to n heights.  Beyond ``support_radius``
    the height is bounded by ``bound`` (inf for unbounded growth).
    """

    N: int
    f: Callable[[np.ndarray], np.ndarray]
    hessian0: np.ndarray | None = None
    support_radius: float = 1.0
    bound: float = np.inf
    name: str = "surface"

    def __post_init__(self):
        if self.N < 3:
            raise DomainError(f"graph surfaces need N >= 3, got N={self.N!r}")
        if not self.support_radius > 0:
            raise DomainError("support_radius must be positive")
        n = self.N - 1
        z = np.zeros((1, n))
        if abs(float(self.f(z)[0])) > 1e-10:
            raise DomainError("f(0) must vanish")
        h = 1e-6
        E = np.eye(n)
        grad = (np.asarray(self.f(h * E)) - np.asarray(self.f(-h * E))) / (2 * h)
        if np.max(np.abs(grad)) > 1e-6:
            raise DomainError("grad f(0) must vanish")
        if self.hessian0 is not None:
            H = np.asarray(self.hessian0, dtype=float)
            if H.shape != (n, n) or not np.allclose(H, H.T):
                raise DomainError("hessian0 must be a symmetric (N-1)x(N-1) matrix")

    def along(self, e: np.ndarray, rho: np.ndarray) -> np.ndarray:
        return np.asarray(self.f(np.outer(rho, e)), dtype=float)

    def second_derivative(self, e: np.ndarray) -> float:
        if self.hessian0 is not None:
            return float(e @ np.asarray(self.hessian0) @ e)
        h = 1e-3 * min(1.0, self.support_radius)
        v = self.along(e, np.array([h, -h]))
        return float(v.sum() / h ** 2)


def _check_s(s: float):
    if not 0 < s < 0.5:
        raise DomainError(f"s must lie in (0, 1/2), got s={s!r}")


def inner_F(t, s: float, N: int) -> np.ndarray:
    """F(t) = int_0^t (1+tau^2)^{-s-N/2} dtau = int_0^{atan t} cos^{2s+N-2}, odd in t."""
    t = np.asarray(t, dtype=float)
    b = s + (N - 1) / 2
    with np.errstate(invalid="ignore", over="ignore"):
        x = np.where(np.isinf(t), 1.0, t * t / (1 + t * t))
    x = np.where(np.isnan(x), 1.0, x)
    return np.sign(t) * 0.5 * beta_fn(0.5, b) * betainc(0.5, b, x)


@dataclass(frozen=True)
class CurvQuad:
    order: int = 16
    n_uniform: int = 64
    abs_tol: float = 1e-9
    rel_tol: float = 1e-7
    eta_factor: float = 4.0


@dataclass(frozen=True)
class CurvResult:
    value: float
    err_est: float


def _outer(profile: Callable[[np.ndarray], np.ndarray], kappa: float, s: float, N: int, R: float,
           q: CurvQuad, cutoff: float = 0.0, extra_breaks: Sequence[float] = ()) -> CurvResult:
    """2 int_0^inf rho^{-1-2s} F(profile(rho)/rho) drho with core, panels and mapped tail."""
    eta = q.eta_factor * max(R, 1.0)
    rho0 = CORE * min(R, 1.0)

    def integrand(rho):
        with np.errstate(over="ignore", invalid="ignore"):
            t = profile(rho) / rho
        return rho ** (-1 - 2 * s) * inner_F(t, s, N)

    def tail_integrand(v):
        rho = eta * np.exp(-np.log(v) / (2 * s))
        with np.errstate(over="ignore", invalid="ignore"):
            pv = profile(np.minimum(rho, 1e150))
            t = pv / rho
        return inner_F(t, s, N) * eta ** (-2 * s) / (2 * s)

    lo_edge = max(rho0, cutoff)
    br = np.unique(np.concatenate([np.geomspace(lo_edge, eta, 48), np.linspace(0.0, eta, q.n_uniform + 1)[1:],
                                   [b for b in extra_breaks if lo_edge < b < eta]]))
    br = br[br >= lo_edge]
    # v -> 0 is rho -> inf; features of f/rho far out land on a geometric scale in v
    vbr = np.unique(np.concatenate([_quad.graded_breaks(0.0, 1.0, True, False, floor=1e-12)[1:],
                                    np.geomspace(1e-14, 1.0, 97)]))

    def run(order):
        x, w = _quad.panel_rule(br, order)
        mid = float(np.sum(integrand(x) * w))
        v, wv = _quad.panel_rule(vbr, order)
        return mid + float(np.sum(tail_integrand(v) * wv))

    hi, lo = run(q.order), run(max(4, q.order - 6))
    core = kappa * lo_edge ** (1 - 2 * s) / (2 * (1 - 2 * s)) if cutoff < rho0 else 0.0
    if cutoff and cutoff < rho0:
        core -= kappa * cutoff ** (1 - 2 * s) / (2 * (1 - 2 * s))
    val = 2 * (hi + core)
    err = 2 * abs(hi - lo)
    if err > max(q.abs_tol, q.rel_tol * abs(val)):
        raise ConvergenceError(f"curvature quadrature unresolved (err_est={err:.3e})", value=val, err_est=err)
    return CurvResult(val, err)


def _unit(e, n: int) -> np.ndarray:
    e = np.asarray(e, dtype=float).reshape(n)
    norm = np.linalg.norm(e)
    if not norm > 0:
        raise DomainError("direction must be nonzero")
    return e / norm


def directional_curvature(surface: GraphSurface, e, s: float, quad: CurvQuad = CurvQuad(),
                          cutoff: float = 0.0) -> CurvResult:
    """K_{s,e}; ``cutoff`` > 0 gives the truncated value with rho > cutoff only."""
    _check_s(s)
    e = _unit(e, surface.N - 1)
    kappa = surface.second_derivative(e)
    prof = lambda rho: surface.along(e, rho)
    return _outer(prof, kappa, s, surface.N, surface.support_radius, quad, cutoff)


def radial_curvature(profile: Callable[[np.ndarray], np.ndarray], s: float, N: int,
                     quad: CurvQuad = CurvQuad(), scale: float = 1.0) -> CurvResult:
    """Directional curvature of the radial graph f(x') = profile(|x'|), the same for every e."""
    _check_s(s)
    if N < 3:
        raise DomainError("N must be at least 3")
    h = 1e-3 * min(scale, 1.0)
    kappa = float((profile(np.array([h]))[0]) * 2 / h ** 2)
    return _outer(profile, kappa, s, N, scale, quad)


def paraboloid(N: int = 3, c: float = 1.0) -> GraphSurface:
    """f = c |x'|^2 / 2."""
    return GraphSurface(N, lambda x: 0.5 * c * np.sum(x * x, axis=1), c * np.eye(N - 1), 1.0, np.inf,
                        f"paraboloid(c={c})")


def paraboloid_curvature(s: float, N: int = 3) -> float:
    """Closed form of K_{s,e} for f = |x'|^2/2: 2^{-1-2s} B(1/2-s, 2s+(N-1)/2) / s."""
    _check_s(s)
    return 2 ** (-1 - 2 * s) * beta_fn(0.5 - s, 2 * s + (N - 1) / 2) / s


def saddle() -> GraphSurface:
    return GraphSurface(3, lambda x: 0.5 * (x[:, 0] ** 2 - x[:, 1] ** 2), np.diag([1.0, -1.0]), 1.0, np.inf, "saddle")


def damped_quadratic() -> GraphSurface:
    """f = (x^2 + 2 y^2) exp(-|x'|^2): Hessian diag(2, 4), bounded by 2/e."""
    return GraphSurface(3, lambda x: (x[:, 0] ** 2 + 2 * x[:, 1] ** 2) * np.exp(-np.sum(x * x, axis=1)),
                        np.diag([2.0, 4.0]), 4.0, 2 / np.e, "damped_quadratic")


def es2_surface() -> GraphSurface:
    """f(x, y) = 8 x^2 y^2, whose Hessian vanishes at the origin."""
    return GraphSurface(3, lambda x: 8 * x[:, 0] ** 2 * x[:, 1] ** 2, np.zeros((2, 2)), 1.0, np.inf, "es2")


def _directions(N: int, n_dirs: int):
    if N == 3:
        th = 2 * np.pi * np.arange(n_dirs) / n_dirs
        return np.column_stack([np.cos(th), np.sin(th)]), np.full(n_dirs, 1.0 / n_dirs)
    if N == 4:
        d, w = _quad.sphere_rule(3, n_dirs)
        return d, w / w.sum()
    raise DomainError("direction averages are implemented for N = 3 and N = 4")


def mean_curvature_avg(surface: GraphSurface, s: float, n_dirs: int = 64, quad: CurvQuad = CurvQuad()) -> float:
    """Average of K_{s,e} over uniformly distributed directions."""
    dirs, w = _directions(surface.N, n_dirs)
    return float(sum(wi * directional_curvature(surface, e, s, quad).value for e, wi in zip(dirs, w)))


def mean_curvature_pv(surface: GraphSurface, s: float, order: int = 16, k_min: int = -14, k_max: int = 14,
                      split: int = 4) -> float:
    """(1/|S^{N-2}|) PV int (chi_E - chi_{E^c}) |x|^{-N-2s} dx in Cartesian coordinates (N = 3).

    Odd cancellation in h leaves the slab between 0 and f(x'), integrated in h
    by a Gauss hypergeometric closed form.  The plane x' is cut into square
    rings 2^k < |x'|_inf < 2^{k+1}; the innermost and outermost ring sums are
    continued geometrically.
    """
    _check_s(s)
    if surface.N != 3:
        raise DomainError("mean_curvature_pv is implemented for N = 3")
    a = 1.5 + s
    x, w = _quad.gauss_legendre(order)
    t = np.linspace(0.0, 1.0, split + 1)
    loc = (t[:-1, None] + np.diff(t)[:, None] * x[None, :]).ravel()
    wl = (np.diff(t)[:, None] * w[None, :]).ravel()
    # the ring [-2,2]^2 minus [-1,1]^2 as 8 unit squares
    offsets = [(i, j) for i in (-2, -1, 0, 1) for j in (-2, -1, 0, 1) if not (i in (-1, 0) and j in (-1, 0))]
    X, Y = np.meshgrid(loc, loc, indexing="ij")
    W = np.outer(wl, wl).ravel()
    unit = np.concatenate([np.column_stack([X.ravel() + i, Y.ravel() + j]) for i, j in offsets])
    Wu = np.tile(W, len(offsets))

    def ring(k):
        p = unit * 2.0 ** k
        r2 = np.sum(p * p, axis=1)
        fv = np.asarray(surface.f(p), dtype=float)
        slab = fv * r2 ** (-a) * hyp2f1(a, 0.5, 1.5, -fv * fv / r2)
        return float(np.sum(slab * Wu)) * 4.0 ** k

    sums = np.array([ring(k) for k in range(k_min, k_max + 1)])
    total = float(sums.sum())
    for a_, b_ in ((sums[0], sums[1]), (sums[-1], sums[-2])):
        qr = a_ / b_ if b_ != 0 else 0.0
        if 0 < qr < 1:
            total += a_ * qr / (1 - qr)
    return 2 * total / (2 * np.pi)


# ---------------------------------------------------------------------------
# the example with vanishing Hessian


def es2_curvature(theta: float, s: float, order: int = 16) -> float:
    """K_{s,theta} of f = 8x^2y^2 from the reduced one-dimensional integral.

    (2/(2s+1)) int_0^inf A^{s/2+1/4} / (z^2 sqrt(A) + sqrt(z))^{s+1/2} dz,
    A = 1 - cos 4 theta, computed with z = w^2.
    """
    _check_s(s)
    A = 1 - np.cos(4 * theta)
    if A <= 1e-15:
        return 0.0
    sa = np.sqrt(A)
    p = s + 0.5

    def g(w):
        return 2 * w * A ** (s / 2 + 0.25) / (w ** 4 * sa + w) ** p

    # the integrand changes regime where w^3 sqrt(A) = 1
    w_star = sa ** (-1 / 3)
    br = np.unique(np.concatenate([w_star * np.geomspace(1e-10, 1.0, 40), w_star * np.geomspace(1.0, 64.0, 24)]))
    br = np.concatenate([[0.0], br])
    x, wq = _quad.panel_rule(br, order)
    body = float(np.sum(g(x) * wq))
    # beyond W the integrand is 2 A^{s/2+1/4} (sqrt A)^{-p} w^{1-4p} (1 + O(w^{-3}))
    W = br[-1]
    tail = 2 * A ** (s / 2 + 0.25) * sa ** (-p) * W ** (2 - 4 * p) / (4 * p - 2)
    corr_x, corr_w = _quad.panel_rule(np.array([W, 2 * W, 8 * W, 64 * W, 4096 * W]), order)
    exact_minus_model = g(corr_x) - 2 * A ** (s / 2 + 0.25) * sa ** (-p) * corr_x ** (1 - 4 * p)
    tail += float(np.sum(exact_minus_model * corr_w))
    return 2 / (2 * s + 1) * (body + tail)


def es2_closed_form(theta: float, s: float) -> float:
    """(A^{2s/3} / s) (1/2) B((1 - 2s/3)/2, s + 3/2 - (1 - 2s/3)/2), A = 1 - cos 4 theta."""
    _check_s(s)
    A = 1 - np.cos(4 * theta)
    a = (1 - 2 * s / 3) / 2
    return float(max(A, 0.0) ** (2 * s / 3) / s * 0.5 * beta_fn(a, s + 1.5 - a))


# ---------------------------------------------------------------------------
# asymptotics as s -> 1/2


@dataclass(frozen=True)
class SweepResult:
    values: tuple[tuple[float, float], ...]
    target: float
    deviations: tuple[float, ...]
    contract_ok: bool


def asymptotic_sweep(surface: GraphSurface, e, s_list: Sequence[float], quad: CurvQuad = CurvQuad(),
                     tail: int = 3, final_tol: float = 0.05) -> SweepResult:
    """(s, (1-2s) K_{s,e}) along s_list, compared with the classical <D^2 f(0) e, e>."""
    s_arr = np.asarray(s_list, dtype=float)
    if np.any(np.diff(s_arr) <= 0):
        raise DomainError("s_list must be increasing")
    e = _unit(e, surface.N - 1)
    target = surface.second_derivative(e)
    vals = tuple((float(s), float((1 - 2 * s) * directional_curvature(surface, e, s, quad).value)) for s in s_arr)
    dev = tuple(abs(v - target) for _, v in vals)
    tail_dev = np.array(dev[-tail:])
    ok = bool(np.all(np.diff(tail_dev) <= 1e-12))
    if s_arr[-1] >= 0.499:
        ok = ok and dev[-1] < final_tol
    return SweepResult(vals, target, dev, ok)


# ---------------------------------------------------------------------------
# prescribed extrema on S^1 (N = 3)


def bump(rho) -> np.ndarray:
    """exp(-1/((rho-1)(2-rho))) on (1, 2), zero elsewhere."""
    rho = np.asarray(rho, dtype=float)
    inside = (rho > 1) & (rho < 2)
    out = np.zeros(rho.shape)
    out[inside] = np.exp(-1.0 / ((rho[inside] - 1) * (2 - rho[inside])))
    return out


Arcs = Sequence[tuple[float, float]]


def _arc_distance(theta: np.ndarray, arcs: Arcs) -> np.ndarray:
    """Angular distance from theta to a union of closed arcs [a, b] (counter-clockwise)."""
    theta = np.mod(np.asarray(theta, dtype=float), 2 * np.pi)
    best = np.full(theta.shape, np.inf)
    for a, b in arcs:
        if b < a:
            raise ConstructionError(f"arc ({a}, {b}) must satisfy start <= end")
        length = min(b - a, 2 * np.pi)
        rel = np.mod(theta - a, 2 * np.pi)
        d = np.where(rel <= length, 0.0, np.minimum(rel - length, 2 * np.pi - rel))
        best = np.minimum(best, d)
    return best


def _smooth_sq(d: np.ndarray) -> np.ndarray:
    """Squared distance passed through a smooth monotone cap: d^2 / (1 + d^2)."""
    return d * d / (1 + d * d)


@dataclass
class Prescribed:
    surface: GraphSurface
    verified: bool
    weight: Callable[[np.ndarray], np.ndarray]
    K_minus: float
    K_plus: float
    K_grid: np.ndarray
    grid: np.ndarray


def prescribed_extrema(sigma_minus: Arcs, sigma_plus: Arcs, s: float = 0.3,
                       phi: Callable[[np.ndarray], np.ndarray] = bump, margin: Sequence[float] | None = None,
                       quad: CurvQuad = CurvQuad(), tol: float = 1e-6) -> Prescribed:
    """Graph f(x') = a(x'/|x'|) phi(|x'|) whose K_{s,e} is minimal on sigma_minus and maximal on sigma_plus.

    a = g_-/(g_- + g_+) with g the smoothed squared angular distances, so
    a = 0 on sigma_minus and a = 1 on sigma_plus; K increases with a.
    """
    _check_s(s)
    if not sigma_minus or not sigma_plus:
        raise DomainError("both direction sets must be nonempty")
    probe = np.linspace(0, 2 * np.pi, 4097)
    dm, dp = _arc_distance(probe, sigma_minus), _arc_distance(probe, sigma_plus)
    if np.any((dm == 0) & (dp == 0)) or min(np.min(dm + dp), 1.0) <= 0:
        raise ConstructionError("the two direction sets must be disjoint")

    def a_of(theta):
        gm = _smooth_sq(_arc_distance(theta, sigma_minus))
        gp = _smooth_sq(_arc_distance(theta, sigma_plus))
        return gm / (gm + gp)

    def f(x):
        x = np.asarray(x, dtype=float)
        rho = np.hypot(x[:, 0], x[:, 1])
        return a_of(np.arctan2(x[:, 1], x[:, 0])) * phi(rho)

    surf = GraphSurface(3, f, np.zeros((2, 2)), 2.0, float(np.max(phi(np.linspace(1, 2, 1001)))), "prescribed")

    def K(theta):
        return directional_curvature(surf, [np.cos(theta), np.sin(theta)], s, quad).value

    a_m, a_p = sigma_minus[0][0], sigma_plus[0][0]
    K_minus, K_plus = K(a_m), K(a_p)
    if margin is None:
        margin = np.linspace(0, 2 * np.pi, 17)[:-1] + np.pi / 16 * 0.5
    grid = np.asarray(margin, dtype=float)
    grid = grid[(_arc_distance(grid, sigma_minus) > 0) & (_arc_distance(grid, sigma_plus) > 0)]
    Kg = np.array([K(th) for th in grid])
    verified = bool(np.all(Kg > K_minus + tol) and np.all(Kg < K_plus - tol))
    return Prescribed(surf, verified, a_of, K_minus, K_plus, Kg, grid)
