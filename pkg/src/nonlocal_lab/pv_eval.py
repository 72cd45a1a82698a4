"""Pointwise principal-value evaluation of the restricted fractional Laplacian.

The integral is split at ``split_radius``.  Inside, the symmetrised second
difference ``2u(x) - u(x+y) - u(x-y)`` makes the integrand O(|y|^{2-N-2s});
outside, ``u(x) - u(y)`` is integrated along rays with panels graded toward
every declared singular sphere the ray crosses, and the tail beyond
``far_radius`` is mapped onto (0, 1] by ``t = R / w``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import _quad
from .errors import ConvergenceError, DomainError
from .kernels import BallGeometry, C_Ns, KernelParams, c_Ns, explicit_sharmonic, gamma_radius, torsion_ball

GROWTH_CLASSES = ("bounded", "integrable", "compact")
RAY_FLOOR = 1e-10


@dataclass(frozen=True)
class ScalarField:
    """A real field on all of R^N plus the smoothness facts the evaluator trusts.

    ``eval`` maps an (M, N) array of points to M values.  ``singular_spheres``
    lists (center, radius) pairs across which the field may be discontinuous
    or blow up integrably; away from them it is assumed C^2.
    """

    eval: Callable[[np.ndarray], np.ndarray]
    growth_class: str = "integrable"
    c2_radius: float = np.inf
    sup_bound: float | None = None
    support: tuple[tuple[float, ...], float] | None = None
    singular_spheres: tuple[tuple[tuple[float, ...], float], ...] = ()

    def __post_init__(self):
        if self.growth_class not in GROWTH_CLASSES:
            raise DomainError(f"growth_class must be one of {GROWTH_CLASSES}, got {self.growth_class!r}")
        if self.growth_class == "bounded" and self.sup_bound is None:
            raise DomainError("a bounded field must declare sup_bound")
        if self.growth_class == "compact" and self.support is None:
            raise DomainError("a compactly supported field must declare its support ball")

    def __call__(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        vals = np.asarray(self.eval(pts), dtype=float)
        if not np.all(np.isfinite(vals)):
            bad = pts[~np.isfinite(vals)][0]
            raise DomainError(f"field not finite at {bad.tolist()}")
        return vals

    def translated(self, shift) -> "ScalarField":
        """The field y -> u(y - shift), with its declarations moved along."""
        shift = np.asarray(shift, dtype=float)
        sup = None
        if self.support is not None:
            sup = (tuple(np.add(self.support[0], shift)), self.support[1])
        spheres = tuple((tuple(np.add(c, shift)), r) for c, r in self.singular_spheres)
        base = self.eval
        return ScalarField(lambda p: base(p - shift), self.growth_class, self.c2_radius,
                           self.sup_bound, sup, spheres)


def field_sum(terms: Sequence[tuple[float, ScalarField]]) -> ScalarField:
    """Linear combination sum(a_i u_i); declarations are merged conservatively."""
    classes = [u.growth_class for _, u in terms]
    if "integrable" in classes:
        gc = "integrable"
    elif "bounded" in classes:
        gc = "bounded"
    else:
        gc = "compact"
    sup = None
    if gc == "bounded":
        sup = sum(abs(a) * (u.sup_bound or 0.0) for a, u in terms)
    support = None
    if gc == "compact":
        cs = [np.asarray(u.support[0]) for _, u in terms]
        c0 = cs[0]
        support = (tuple(c0), max(np.linalg.norm(c - c0) + u.support[1] for c, (_, u) in zip(cs, terms)))
    spheres = tuple(sp for _, u in terms for sp in u.singular_spheres)
    c2 = min(u.c2_radius for _, u in terms)
    return ScalarField(lambda p: sum(a * u.eval(p) for a, u in terms), gc, c2, sup, support, spheres)


@dataclass(frozen=True)
class QuadConfig:
    split_radius: float = 0.1
    near_order: int = 12
    far_radius: float = 50.0
    abs_tol: float = 1e-8
    rel_tol: float = 1e-6
    n_dirs: int = 64
    order: int = 12

    def __post_init__(self):
        if not 0 < self.split_radius < self.far_radius:
            raise DomainError("need 0 < split_radius < far_radius")
        if self.near_order < 1 or self.n_dirs < 2:
            raise DomainError("near_order >= 1 and n_dirs >= 2 required")


@dataclass(frozen=True)
class PVResult:
    value: float
    err_est: float


@dataclass(frozen=True)
class MeanValueResult:
    residual: float
    bound: float


def _sphere_crossings(x: np.ndarray, omega: np.ndarray, spheres) -> list[float]:
    out = []
    for c, r in spheres:
        d = x - np.asarray(c, dtype=float)
        b = float(omega @ d)
        q = float(d @ d) - r * r
        disc = b * b - q
        if disc <= 0:
            continue
        root = np.sqrt(disc)
        out.extend(t for t in (-b - root, -b + root) if t > 0)
    return out


def _distance_to_spheres(x: np.ndarray, spheres) -> float:
    if not spheres:
        return np.inf
    return min(abs(np.linalg.norm(x - np.asarray(c, dtype=float)) - r) for c, r in spheres)


def _subset_weights(N: int, n: int, w: np.ndarray) -> np.ndarray | None:
    """Coarse angular weights using every other trapezoid node (None if N=1)."""
    if N == 1:
        return None
    if N == 2:
        wc = np.zeros_like(w)
        wc[::2] = 2 * w[::2]
        return wc
    nz = max(2, n // 2)
    wc = w.reshape(nz, n).copy()
    wc[:, 1::2] = 0.0
    wc[:, ::2] *= 2
    return wc.ravel()


ANGLE_FLOOR = 1e-7


def _angular_rule(N: int, x: np.ndarray, spheres, n_dirs: int, m: int):
    """Directions, weights and alternative weight vectors for the error estimate.

    When x lies outside a declared singular sphere, ray integrals are not
    smooth in the direction at the rays tangent to it; the rule is then a
    polar one about the axis toward the nearest such sphere, with panels
    graded at the tangent cone.  Otherwise it is the plain sphere rule.
    """
    outside = []
    for c, r in spheres:
        d = np.linalg.norm(x - np.asarray(c, dtype=float))
        if d > r:
            outside.append((d - r, np.asarray(c, dtype=float), r, d))
    if N == 1 or not outside:
        dirs, w = _quad.sphere_rule(N, n_dirs)
        wc = _subset_weights(N, n_dirs, w)
        return dirs, w, ([] if wc is None else [wc])
    _, c, r, d = min(outside, key=lambda t: t[0])
    axis = (c - x) / d
    beta = float(np.arcsin(r / d))
    br = _quad.interval_breaks(0.0, np.pi, [beta], floor=ANGLE_FLOOR)
    m_lo = max(3, m // 2 + 1)
    n_ring = max(4, n_dirs // 2 if N == 3 else 2)
    d_hi, w_hi = _quad.axis_sphere_rule(axis, br, n_ring=n_ring, m=m)
    d_lo, w_lo = _quad.axis_sphere_rule(axis, br, n_ring=n_ring, m=m_lo)
    dirs = np.vstack([d_hi, d_lo])
    w = np.concatenate([w_hi, np.zeros_like(w_lo)])
    alts = [np.concatenate([np.zeros_like(w_hi), w_lo])]
    if N == 3:
        ring = w_hi.reshape(-1, n_ring).copy()
        ring[:, 1::2] = 0.0
        ring[:, ::2] *= 2
        alts.append(np.concatenate([ring.ravel(), np.zeros_like(w_lo)]))
    return dirs, w, alts


def _innermost_tail(sums: np.ndarray, inner: int, step: int) -> float:
    """Geometric continuation of the panel sums into the innermost panel at a singular point.

    ``inner`` indexes the panel touching the point and ``step`` walks away
    from it.  Graded panel sums near an algebraic singularity form a
    geometric sequence, so the continuation is exact to leading order, while
    a Gauss rule on the innermost panel misses a fraction of its weight.
    """
    i1, i2 = inner + step, inner + 2 * step
    if not (0 <= i1 < len(sums) and 0 <= i2 < len(sums)) or sums[i2] == 0:
        return float(sums[inner])
    q = sums[i1] / sums[i2]
    if not 0 < q < 1:
        return float(sums[inner])
    return float(sums[i1] * q / (1 - q))


def _ray_integral(fun, a: float, b: float, singular, m: int, geometric: bool = False):
    """(hi, lo) composite-rule values of a 1-D integral along a ray."""
    # floor keeps Gauss nodes resolvably off the singular point in double precision
    br = _quad.interval_breaks(a, b, singular, floor=RAY_FLOOR, geometric_from=a if geometric else None)
    br = br[np.concatenate([[True], np.diff(br) > 0])]
    sing = [p for p in singular if a <= p <= b]

    def integrate(order):
        x, w = _quad.panel_rule(br, order)
        sums = (np.asarray(fun(x), dtype=float) * w).reshape(-1, order).sum(axis=1)
        for p in sing:
            k = int(np.argmin(np.abs(br - p)))
            if k < len(sums):
                sums[k] = _innermost_tail(sums, k, 1)
            if k > 0:
                sums[k - 1] = _innermost_tail(sums, k - 1, -1)
        return float(sums.sum())

    return integrate(m), integrate(max(3, m // 2 + 1))


def frac_laplacian_pv(u: ScalarField, params: KernelParams, x, q: QuadConfig = QuadConfig()) -> PVResult:
    """(-Lap)^s u(x) in the principal-value sense, with an error estimate."""
    N, s = params.N, params.s
    x = np.asarray(x, dtype=float).reshape(N)
    dist = _distance_to_spheres(x, u.singular_spheres)
    if dist == 0:
        raise DomainError(f"x={x.tolist()} lies on a declared singular sphere of the field")
    eps = min(q.split_radius, u.c2_radius, 0.5 * dist)
    C = C_Ns(N, s)
    ux = float(u(x[None, :])[0])
    m = q.order
    dirs, wd, alts = _angular_rule(N, x, u.singular_spheres, q.n_dirs, m)

    # near field: geometric panels on [t_min, eps], Taylor core on [0, t_min]
    t_min = eps * 2.0 ** (-q.near_order)
    near_br = eps * 2.0 ** np.arange(-q.near_order, 1)
    near_rule = _quad.composite(near_br, m, max(3, m // 2 + 1))

    def near_dir(om):
        def integrand(t):
            p = x[None, :] + t[:, None] * om[None, :]
            mm = x[None, :] - t[:, None] * om[None, :]
            return (2 * ux - u(p) - u(mm)) * t ** (-1 - 2 * s)
        hi = float(integrand(near_rule.nodes) @ near_rule.weights)
        lo = float(integrand(near_rule.nodes_lo) @ near_rule.weights_lo)
        d2 = float(2 * ux - u(x[None, :] + t_min * om[None, :])[0] - u(x[None, :] - t_min * om[None, :])[0]) / t_min ** 2
        core = d2 * t_min ** (2 - 2 * s) / (2 - 2 * s)
        return hi + core, lo + core, abs(core) * 1e-2

    def far_dir(om):
        crossings = [t for t in _sphere_crossings(x, om, u.singular_spheres) if t > eps]
        err_tail = 0.0
        if u.growth_class == "compact":
            c, rs = u.support
            R = np.linalg.norm(x - np.asarray(c)) + rs
            R = max(R, 2 * eps)
        else:
            R = max(q.far_radius, 2 * max(crossings, default=0.0), 2 * eps)

        def integrand(t):
            p = x[None, :] + t[:, None] * om[None, :]
            return (ux - u(p)) * t ** (-1 - 2 * s)

        hi, lo = _ray_integral(integrand, eps, R, crossings, m, geometric=True)
        if u.growth_class == "bounded":
            err_tail = 2 * u.sup_bound * R ** (-2 * s) / (2 * s)
        else:
            if u.growth_class == "compact":
                # u vanishes beyond R along every ray
                th = tl = ux * R ** (-2 * s) / (2 * s)
            else:
                # t = R v^{-1/(2s)} absorbs the t^{-1-2s} weight exactly
                def tail(v):
                    t = R * v ** (-1.0 / (2 * s))
                    p = x[None, :] + t[:, None] * om[None, :]
                    return (ux - u(p)) * R ** (-2 * s) / (2 * s)
                th, tl = _ray_integral(tail, 0.0, 1.0, [0.0], m)
            hi, lo = hi + th, lo + tl
        return hi, lo, err_tail

    vals = np.zeros((len(dirs), 2))
    extra = np.zeros(len(dirs))
    for i, om in enumerate(dirs):
        nh, nl, ne = near_dir(om)
        fh, fl, fe = far_dir(om)
        vals[i] = (0.5 * nh + fh, 0.5 * nl + fl)
        extra[i] = 0.5 * ne + fe
    value = C * float(vals[:, 0] @ wd)
    err = C * abs(float((vals[:, 0] - vals[:, 1]) @ wd)) + C * float(np.abs(extra) @ wd)
    err += C * sum(abs(float(vals[:, 0] @ (wd - wa))) for wa in alts)
    return PVResult(value=value, err_est=err)


def frac_laplacian_checked(u, params, x, q: QuadConfig = QuadConfig()) -> PVResult:
    """Like frac_laplacian_pv but raises ConvergenceError when err_est exceeds the tolerances."""
    r = frac_laplacian_pv(u, params, x, q)
    if r.err_est > max(q.abs_tol, q.rel_tol * abs(r.value)):
        raise ConvergenceError(
            f"PV quadrature at x={np.asarray(x).tolist()} reached err_est={r.err_est:.3e}",
            value=r.value, err_est=r.err_est)
    return r


def exit_average(u: ScalarField, params: KernelParams, x, r: float, q: QuadConfig = QuadConfig()) -> tuple[float, float]:
    """(eta_r * u)(x) and an error estimate, integrated as u(x) - int eta_r (u(x) - u)."""
    N, s = params.N, params.s
    x = np.asarray(x, dtype=float).reshape(N)
    ux = float(u(x[None, :])[0])
    cN = c_Ns(N, s)
    m = q.order
    dirs, wd, alts = _angular_rule(N, x, u.singular_spheres, q.n_dirs, m)
    vals = np.zeros((len(dirs), 2))
    for i, om in enumerate(dirs):
        crossings = [t for t in _sphere_crossings(x, om, u.singular_spheres) if t > r]
        R = max(4 * r, 2 * max(crossings, default=0.0))
        if u.growth_class == "compact":
            c, rs = u.support
            R = max(R, np.linalg.norm(x - np.asarray(c)) + rs)

        def integrand(t):
            p = x[None, :] + t[:, None] * om[None, :]
            return (ux - u(p)) * cN * r ** (2 * s) / (t * (t * t - r * r) ** s)

        hi, lo = _ray_integral(integrand, r, R, [r, *crossings], m, geometric=False)

        # t = R v^{-1/(2s)}; the Jacobian cancels the t^{-1-2s} decay of the kernel
        def tail(v):
            t = R * v ** (-1.0 / (2 * s))
            p = x[None, :] + t[:, None] * om[None, :]
            return (ux - u(p)) * cN * (r / R) ** (2 * s) / (2 * s) * (1 - (r / t) ** 2) ** (-s)

        th, tl = _ray_integral(tail, 0.0, 1.0, [0.0], m)
        vals[i] = (hi + th, lo + tl)
    diff = float(vals[:, 0] @ wd)
    err = abs(float((vals[:, 0] - vals[:, 1]) @ wd))
    err += sum(abs(float(vals[:, 0] @ (wd - wa))) for wa in alts)
    return ux - diff, err


def mean_value_residual(u: ScalarField, params: KernelParams, x, r: float,
                        q: QuadConfig = QuadConfig(), n_probe: int = 2) -> MeanValueResult:
    """u(x) - (eta_r * u)(x) together with gamma(N,s,r) sup_{B_r(x)} |(-Lap)^s u|."""
    N = params.N
    x = np.asarray(x, dtype=float).reshape(N)
    if not r > 0:
        raise DomainError(f"r must be positive, got {r!r}")
    if _distance_to_spheres(x, u.singular_spheres) <= r:
        raise DomainError("the closed ball B_r(x) must avoid the field's singular spheres")
    avg, _ = exit_average(u, params, x, r, q)
    ux = float(u(x[None, :])[0])
    residual = ux - avg
    probes = [x]
    for k in range(1, n_probe + 1):
        for i in range(N):
            for sgn in (1.0, -1.0):
                e = np.zeros(N)
                e[i] = sgn * r * k / n_probe
                probes.append(x + e)
    sup = 0.0
    for p in probes:
        res = frac_laplacian_pv(u, params, p, q)
        sup = max(sup, abs(res.value) + res.err_est)
    return MeanValueResult(residual=residual, bound=float(gamma_radius(N, params.s, r)) * sup)


def exterior_frac_laplacian(v: ScalarField, params: KernelParams, y, ball_center, ball_radius: float,
                            m: int = 12, n_ring: int = 48) -> float:
    """-C_{N,s} int_B v(z) |z-y|^{-N-2s} dz for v supported in the ball and y outside it."""
    N, s = params.N, params.s
    y = np.asarray(y, dtype=float).reshape(N)
    c0 = np.asarray(ball_center, dtype=float)
    d = y - c0
    dist = np.linalg.norm(d)
    R = ball_radius
    if dist <= R:
        raise DomainError("exterior_frac_laplacian needs y outside the ball")
    gap = dist - R
    rho_br = _quad.interval_breaks(0.0, R, [R])
    rho, wr = _quad.panel_rule(rho_br, m)
    a_br = _quad.interval_breaks(0.0, np.pi, [0.0]) if gap < 0.5 * R else np.linspace(0.0, np.pi, 9)
    axis = d / dist
    dirs, wa = _quad.axis_sphere_rule(axis, a_br, n_ring=n_ring, m=m)
    z = c0[None, None, :] + rho[:, None, None] * dirs[None, :, :]
    vals = v(z.reshape(-1, N)).reshape(len(rho), len(dirs))
    kern = np.linalg.norm(z - y[None, None, :], axis=-1) ** (-N - 2 * s)
    integ = (vals * kern) * (rho ** (N - 1))[:, None]
    return -C_Ns(N, s) * float(wr @ integ @ wa)


@dataclass(frozen=True)
class DualityGrid:
    """Polar tensor grid on and around a ball for the duality residual."""

    order: int = 8
    n_ang: int = 16
    radial_symmetry: bool = False
    tol: float = 1e-2
    pv: QuadConfig = field(default_factory=lambda: QuadConfig(n_dirs=32, order=10, near_order=10))


def _polar_nodes(N, s, center, R, grid: DualityGrid, exterior: bool):
    m = grid.order
    if exterior:
        # |y| = R v^{-1/(2s)}, v in (0, 1]: graded at the sphere (v=1) and at infinity (v=0)
        br = _quad.interval_breaks(0.0, 1.0, [0.0, 1.0], floor=1e-9)
        v, wv = _quad.panel_rule(br, m)
        rho = R * v ** (-1.0 / (2 * s))
        wr = wv * rho / (2 * s * v)
    else:
        br = _quad.interval_breaks(0.0, R, [R], floor=1e-9)
        rho, wr = _quad.panel_rule(br, m)
    if grid.radial_symmetry:
        dirs = np.zeros((1, N))
        dirs[0, 0] = 1.0
        wd = np.array([_quad.sphere_area(N)])
    else:
        dirs, wd = _quad.sphere_rule(N, grid.n_ang)
    pts = np.asarray(center)[None, None, :] + rho[:, None, None] * dirs[None, :, :]
    w = (wr * rho ** (N - 1))[:, None] * wd[None, :]
    return pts.reshape(-1, N), w.ravel()


def duality_residual(u: ScalarField, v: ScalarField, center, radius: float, params: KernelParams,
                     grid: DualityGrid = DualityGrid()) -> float:
    """int_B u L v - int_B v L u + int_{CB} u L v with L = (-Lap)^s and v = 0 off B.

    ``v`` must be supported in the closed ball.

    Vanishes for admissible (u, v); a coarse grid of order-3 fewer nodes is
    compared against the requested one and a ConvergenceError is raised when
    the two differ by more than ``grid.tol``.
    """
    N = params.N

    def evaluate(g: DualityGrid) -> float:
        pin, win = _polar_nodes(N, params.s, center, radius, g, exterior=False)
        pout, wout = _polar_nodes(N, params.s, center, radius, g, exterior=True)
        Lv_in = np.array([frac_laplacian_pv(v, params, p, g.pv).value for p in pin])
        Lu_in = np.array([frac_laplacian_pv(u, params, p, g.pv).value for p in pin])
        # v vanishes off the ball, so off it (-Lap)^s v is a plain (non-PV) integral
        Lv_out = np.array([exterior_frac_laplacian(v, params, p, center, radius) for p in pout])
        t1 = float((u(pin) * Lv_in) @ win)
        t2 = float((v(pin) * Lu_in) @ win)
        t3 = float((u(pout) * Lv_out) @ wout)
        return t1 - t2 + t3

    fine = evaluate(grid)
    coarse = evaluate(DualityGrid(max(3, grid.order - 3), max(4, grid.n_ang // 2),
                                  grid.radial_symmetry, grid.tol, grid.pv))
    if abs(fine - coarse) > grid.tol:
        raise ConvergenceError(f"duality grid unresolved: |fine - coarse| = {abs(fine - coarse):.3e}",
                               value=fine, err_est=abs(fine - coarse))
    return fine


def sharmonic_field(params: KernelParams, sigma: float) -> ScalarField:
    """The explicit s-harmonic family u_sigma on the unit ball, as a field."""
    N = params.N
    explicit_sharmonic(params, sigma, np.full(N, 2.0))
    return ScalarField(lambda p: explicit_sharmonic(params, sigma, p), "integrable",
                       singular_spheres=((tuple(np.zeros(N)), 1.0),))


def torsion_field(params: KernelParams) -> ScalarField:
    """The torsion function of the unit ball, which solves (-Lap)^s v = 1 there."""
    N = params.N
    ball = BallGeometry(tuple(np.zeros(N)), 1.0)
    return ScalarField(lambda p: torsion_ball(params, ball, p), "compact", support=(ball.center, 1.0),
                       singular_spheres=((ball.center, 1.0),))
