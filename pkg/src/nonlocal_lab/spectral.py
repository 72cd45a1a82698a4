"""Spectral fractional Laplacian on the interval (0, 1) and on rectangles.

Eigenpairs are sine products.  The Dirichlet heat kernel of the interval is
evaluated by the method of images for small times and by its eigen-series
for large times; on a rectangle it is the product of two interval kernels.
Green, Poisson, jump and killing kernels are obtained by subordination,
i.e. integrals of the heat kernel against powers of t, computed with Gauss
panels in log t.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import mpmath
import numpy as np
from scipy.special import erfc, gamma

from . import _quad
from .errors import ConvergenceError, DomainError, ResolutionError
from .kernels import C_Ns

T_SWITCH = 0.05
IMAGES = 4
SERIES_TAIL = 1e-12
SERIES_CAP = 20_000
# relative radius of the Taylor core in the principal-value check
CORE = 1e-4


# ---------------------------------------------------------------------------
# eigenbasis


@dataclass(frozen=True)
class EigenBasis:
    """Dirichlet eigenpairs of (0, a) or (0, a) x (0, b), sorted by eigenvalue."""

    sides: tuple[float, ...] = (1.0,)
    J: int = 200

    def __post_init__(self):
        if len(self.sides) not in (1, 2) or any(L <= 0 for L in self.sides):
            raise DomainError("sides must hold one or two positive lengths")
        if self.J < 1:
            raise DomainError("J must be positive")

    @property
    def dim(self) -> int:
        return len(self.sides)

    def _modes(self) -> np.ndarray:
        if self.dim == 1:
            return np.arange(1, self.J + 1)[:, None]
        a, b = self.sides
        n = int(np.ceil(np.sqrt(self.J))) + 2
        while True:
            j, k = np.meshgrid(np.arange(1, n + 1), np.arange(1, n + 1), indexing="ij")
            lam = np.pi ** 2 * ((j / a) ** 2 + (k / b) ** 2)
            order = np.argsort(lam.ravel(), kind="stable")[: self.J]
            modes = np.column_stack([j.ravel()[order], k.ravel()[order]])
            cut = float(lam.ravel()[order[-1]])
            # every mode below the cut must lie inside the enumerated box
            if np.pi ** 2 * (n + 1) ** 2 / max(a, b) ** 2 > cut:
                return modes
            n *= 2

    @property
    def modes(self) -> np.ndarray:
        return self._modes()

    @property
    def eigenvalues(self) -> np.ndarray:
        m = self._modes()
        return np.pi ** 2 * np.sum((m / np.asarray(self.sides)) ** 2, axis=1)

    def phi(self, x) -> np.ndarray:
        """Eigenfunctions at points x, shape (n_points, J)."""
        x = np.asarray(x, dtype=float).reshape(-1, self.dim)
        m = self._modes()
        out = np.ones((len(x), len(m)))
        for i, L in enumerate(self.sides):
            out *= np.sqrt(2.0 / L) * np.sin(np.pi * x[:, i: i + 1] * m[None, :, i] / L)
        return out

    def normal_derivs(self, b) -> np.ndarray:
        """-d/dnu of each eigenfunction at boundary points b (outward normal), shape (n_b, J)."""
        b = np.asarray(b, dtype=float).reshape(-1, self.dim)
        m = self._modes()
        out = np.empty((len(b), len(m)))
        for r, pt in enumerate(b):
            axis, at_zero = _boundary_side(pt, self.sides)
            val = np.ones(len(m))
            for i, L in enumerate(self.sides):
                k = m[:, i]
                if i == axis:
                    # inward derivative of sqrt(2/L) sin(k pi x/L) at x = 0 or x = L
                    val = val * np.sqrt(2.0 / L) * (k * np.pi / L) * (1.0 if at_zero else -np.cos(k * np.pi))
                else:
                    val = val * np.sqrt(2.0 / L) * np.sin(np.pi * pt[i] * k / L)
            out[r] = val
        return out

    def delta(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(-1, self.dim)
        L = np.asarray(self.sides)
        return np.min(np.minimum(x, L - x), axis=1)


def _boundary_side(pt: np.ndarray, sides) -> tuple[int, bool]:
    hits = []
    for i, L in enumerate(sides):
        if abs(pt[i]) < 1e-12:
            hits.append((i, True))
        elif abs(pt[i] - L) < 1e-12:
            hits.append((i, False))
        elif not 0 < pt[i] < L:
            raise DomainError(f"point {pt.tolist()} is outside the domain")
    if len(hits) != 1:
        raise DomainError(f"point {pt.tolist()} must lie on exactly one side of the boundary")
    return hits[0]


def _check_interior(x, basis: EigenBasis) -> np.ndarray:
    x = np.asarray(x, dtype=float).reshape(-1, basis.dim)
    if np.any(basis.delta(x) <= 0):
        raise DomainError("points must lie inside the domain")
    return x


def coefficients(func: Callable[[np.ndarray], np.ndarray], basis: EigenBasis, n_panels: int = 64,
                 order: int = 16) -> np.ndarray:
    """L^2 coefficients of func against the eigenbasis by tensor Gauss quadrature.

    On the interval func receives a flat array of abscissae, on a rectangle
    an (n, 2) array of points.
    """
    grids = []
    for L in basis.sides:
        t, w = _quad.panel_rule(np.linspace(0.0, L, n_panels + 1), order)
        grids.append((t, w))
    if basis.dim == 1:
        pts, wts = grids[0][0][:, None], grids[0][1]
    else:
        X, Y = np.meshgrid(grids[0][0], grids[1][0], indexing="ij")
        pts = np.column_stack([X.ravel(), Y.ravel()])
        wts = np.outer(grids[0][1], grids[1][1]).ravel()
    vals = np.asarray(func(pts[:, 0] if basis.dim == 1 else pts), dtype=float)
    return (basis.phi(pts) * (vals * wts)[:, None]).sum(axis=0)


@dataclass(frozen=True)
class ApplyResult:
    value: float
    tail_est: float


def spectral_apply(coeffs, s: float, basis: EigenBasis, x) -> ApplyResult:
    """sum_j lambda_j^s c_j phi_j(x), with the last-term bound lambda_J^s |c_J| sup|phi| as tail estimate."""
    c = np.asarray(coeffs, dtype=float)
    if c.size > basis.J:
        raise DomainError(f"{c.size} coefficients for a basis of order {basis.J}")
    lam = basis.eigenvalues[: c.size]
    ph = basis.phi(x)[:, : c.size]
    val = ph @ (lam ** s * c)
    sup = float(np.prod([np.sqrt(2.0 / L) for L in basis.sides]))
    tail = float(lam[-1] ** s * abs(c[-1]) * sup)
    v = val if val.size > 1 else float(val[0])
    return ApplyResult(v, tail)


# ---------------------------------------------------------------------------
# heat kernel of (0, 1) and its companions


def _gauss(t, z):
    return np.exp(-z * z / (4 * t)) / np.sqrt(4 * np.pi * t)


def _series_terms(t: float | np.ndarray, tail: float = SERIES_TAIL, cap: int = SERIES_CAP) -> int:
    """Modes needed so that sum_{j>J} 2 j^2 pi^2 e^{-j^2 pi^2 t} < tail."""
    tmin = float(np.min(t))
    J = 1
    while True:
        j = np.arange(J + 1, J + 400)
        if float(np.sum(2 * (j * np.pi) ** 2 * np.exp(-(j * np.pi) ** 2 * tmin))) < tail:
            return J
        J *= 2
        if J > cap:
            need = -np.log(tail) / (np.pi * cap) ** 2
            raise ResolutionError(f"the eigen-series at t={tmin:.3e} needs more than {cap} modes; "
                                  f"use t >= {need:.3e} or the image expansion")


def p1(t, x, y, method: str = "auto") -> np.ndarray:
    """Dirichlet heat kernel of (0, 1) for the generator d^2/dx^2, broadcasting over inputs."""
    t, x, y = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (t, x, y)))
    out = np.empty(t.shape)
    small = t < T_SWITCH if method == "auto" else np.full(t.shape, method == "images")
    if np.any(small):
        ts, xs, ys = t[small], x[small], y[small]
        acc = np.zeros(ts.shape)
        for n in range(-IMAGES, IMAGES + 1):
            acc += _gauss(ts, xs - ys + 2 * n) - _gauss(ts, xs + ys + 2 * n)
        out[small] = acc
    big = ~small
    if np.any(big):
        tb, xb, yb = t[big], x[big], y[big]
        J = _series_terms(tb)
        j = np.arange(1, J + 1)
        out[big] = np.sum(2 * np.exp(-np.outer(tb, (j * np.pi) ** 2)) * np.sin(np.outer(xb, j) * np.pi)
                          * np.sin(np.outer(yb, j) * np.pi), axis=1)
    return out


def dp1(t, x) -> np.ndarray:
    """Inward normal derivative of p1(t, x, .) at the endpoint 0."""
    t, x = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(x, dtype=float))
    out = np.empty(t.shape)
    small = t < T_SWITCH
    if np.any(small):
        ts, xs = t[small], x[small]
        acc = np.zeros(ts.shape)
        for n in range(-IMAGES, IMAGES + 1):
            z = xs + 2 * n
            acc += z / ts * _gauss(ts, z)
        out[small] = acc
    big = ~small
    if np.any(big):
        tb, xb = t[big], x[big]
        J = _series_terms(tb)
        j = np.arange(1, J + 1)
        out[big] = np.sum(2 * j * np.pi * np.exp(-np.outer(tb, (j * np.pi) ** 2)) * np.sin(np.outer(xb, j) * np.pi),
                          axis=1)
    return out


def _erfc_span(u, v):
    """erf(v) - erf(u) for u < v of equal sign, without cancellation."""
    return np.where(u >= 0, erfc(u) - erfc(v), erfc(-v) - erfc(-u))


def killed1(t, x) -> np.ndarray:
    """1 - int_0^1 p1(t, x, y) dy, the probability of having been killed by time t."""
    t, x = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(x, dtype=float))
    out = np.empty(t.shape)
    small = t < T_SWITCH
    if np.any(small):
        ts, xs = t[small], x[small]
        r = 2 * np.sqrt(ts)
        acc = 0.5 * (erfc(xs / r) + erfc((1 - xs) / r))
        for n in range(-IMAGES, IMAGES + 1):
            if n != 0:
                acc -= 0.5 * _erfc_span((xs - 1 + 2 * n) / r, (xs + 2 * n) / r)
            acc += 0.5 * _erfc_span((xs + 2 * n) / r, (xs + 1 + 2 * n) / r)
        out[small] = acc
    big = ~small
    if np.any(big):
        tb, xb = t[big], x[big]
        J = _series_terms(tb)
        j = np.arange(1, J + 1)
        c = 2 * (1 - np.cos(j * np.pi)) / (j * np.pi)
        out[big] = 1.0 - np.sum(np.exp(-np.outer(tb, (j * np.pi) ** 2)) * np.sin(np.outer(xb, j) * np.pi) * c,
                                axis=1)
    return out


def _scaled(L: float):
    """Interval (0, L) kernels from those of (0, 1)."""
    return (lambda t, x, y: p1(t / L ** 2, x / L, y / L) / L,
            lambda t, x: dp1(t / L ** 2, x / L) / L ** 2,
            lambda t, x: killed1(t / L ** 2, x / L))


def heat_kernel(t, x, y, basis: EigenBasis, method: str = "auto") -> np.ndarray:
    """Dirichlet heat kernel p(t, x, y) of the basis domain for the generator Laplacian.

    ``method`` is "auto", "images" or "series"; the series raises a
    resolution error when t is too small for the mode cap.
    """
    if np.any(np.asarray(t) <= 0):
        raise DomainError("heat kernel needs t > 0")
    x = np.asarray(x, dtype=float).reshape(-1, basis.dim)
    y = np.asarray(y, dtype=float).reshape(-1, basis.dim)
    out = 1.0
    for i, L in enumerate(basis.sides):
        out = out * p1(np.asarray(t) / L ** 2, x[:, i] / L, y[:, i] / L, method) / L
    return out


# ---------------------------------------------------------------------------
# subordination


@dataclass(frozen=True)
class SubordinationQuad:
    """Gauss panels in log t between the diffusive onset and the spectral decay."""

    n_panels: int = 64
    order: int = 8
    decay: float = 46.0
    max_width: float = 0.3


DEFAULT_SQ = SubordinationQuad()


def _log_t_rule(d: np.ndarray, lam1: float, q: SubordinationQuad, order: int | None = None):
    """Per-distance rule: rows are targets, columns log-t nodes (t, weights in log t)."""
    x, w = _quad.gauss_legendre(order or q.order)
    lo = np.log(np.maximum(d, 1e-300) ** 2 / (4 * q.decay))
    hi = np.log(q.decay / lam1)
    lo = np.minimum(lo, hi - 1.0)
    n_pan = max(q.n_panels, int(np.ceil(np.max(hi - lo) / q.max_width)))
    width = (hi - lo) / n_pan
    k = np.arange(n_pan)
    u = lo[:, None, None] + width[:, None, None] * (k[None, :, None] + x[None, None, :])
    wt = np.broadcast_to(width[:, None, None] * w[None, None, :], u.shape)
    n = len(d)
    return np.exp(u.reshape(n, -1)), wt.reshape(n, -1), float(hi)


def _lam1(basis: EigenBasis) -> float:
    return float(np.pi ** 2 * sum(1.0 / L ** 2 for L in basis.sides))


def _subordinate(kernel_t: Callable[[np.ndarray, slice], np.ndarray], d: np.ndarray, power: float,
                 basis: EigenBasis, q: SubordinationQuad, check: bool = True, chunk: int = 64) -> np.ndarray:
    """int_0^inf kernel(t) t^power dt for each row, with a low-order comparison.

    ``kernel_t(t, rows)`` evaluates the rows selected by the slice at the
    times t (one row of times per target); rows are processed in chunks.
    """

    def run(order):
        out = np.empty(len(d))
        for a in range(0, len(d), chunk):
            rows = slice(a, min(a + chunk, len(d)))
            t, wt, _ = _log_t_rule(d[rows], _lam1(basis), q, order)
            out[rows] = np.sum(kernel_t(t, rows) * t ** (power + 1) * wt, axis=1)
        return out

    hi = run(q.order)
    if check:
        lo = run(max(3, q.order - 3))
        err = np.abs(hi - lo)
        bad = err > 1e-9 * np.maximum(1.0, np.abs(hi))
        if np.any(bad):
            i = int(np.argmax(err))
            raise ConvergenceError(f"subordination quadrature unresolved (err_est={err[i]:.3e})",
                                   value=float(hi[i]), err_est=float(err[i]))
    return hi


def green_subordinate(s: float, x, y, basis: EigenBasis, q: SubordinationQuad = DEFAULT_SQ) -> np.ndarray:
    """G^s(x, y) = (1/Gamma(s)) int_0^inf p(t, x, y) t^{s-1} dt."""
    _check_s(s, allow_one=True)
    x = _check_interior(x, basis)
    y = _check_interior(y, basis)
    x, y = np.broadcast_arrays(x, y)
    d = np.linalg.norm(x - y, axis=1)
    if np.any(d == 0):
        raise DomainError("green_subordinate needs x != y")
    kern = _pair_kernel(x, y, basis)
    out = _subordinate(kern, d, s - 1, basis, q) / gamma(s)
    return out if out.size > 1 else out[0]


def green_series(s: float, x, y, basis: EigenBasis) -> np.ndarray:
    """Truncated spectral sum sum_j lambda_j^{-s} phi_j(x) phi_j(y)."""
    lam = basis.eigenvalues
    return (basis.phi(x) * basis.phi(y)) @ lam ** (-s)


def green_polylog(s: float, x: float, y: float) -> float:
    """The full spectral sum on (0, 1) in closed form through the polylogarithm.

    sum_j (j pi)^{-2s} 2 sin(j pi x) sin(j pi y)
    = pi^{-2s} Re[Li_{2s}(e^{i pi (x-y)}) - Li_{2s}(e^{i pi (x+y)})].
    """
    _check_s(s, allow_one=True)
    if not (0 < x < 1 and 0 < y < 1) or x == y:
        raise DomainError("green_polylog needs distinct x, y in (0, 1)")
    val = mpmath.polylog(2 * s, mpmath.expjpi(x - y)) - mpmath.polylog(2 * s, mpmath.expjpi(x + y))
    return float(mpmath.re(val) * mpmath.pi ** (-2 * s))


def _pair_kernel(x: np.ndarray, y: np.ndarray, basis: EigenBasis):
    def k(t, rows):
        out = 1.0
        for i, L in enumerate(basis.sides):
            out = out * p1(t / L ** 2, (x[rows, i] / L)[:, None], (y[rows, i] / L)[:, None]) / L
        return out
    return k


def classical_green_interval(x, y) -> np.ndarray:
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    return np.minimum(x, y) * (1 - np.maximum(x, y))


@dataclass(frozen=True)
class JumpKill:
    J: float
    kappa_at_x: float


def _check_s(s: float, allow_one: bool = False):
    if not (0 < s < 1 or (allow_one and s == 1)):
        raise DomainError(f"s must lie in (0, 1), got s={s!r}")


def jump_kernel(s: float, x, y, basis: EigenBasis, q: SubordinationQuad = DEFAULT_SQ) -> np.ndarray:
    """J(x, y) = (s/Gamma(1-s)) int_0^inf p(t, x, y) t^{-1-s} dt."""
    _check_s(s)
    x = _check_interior(x, basis)
    y = _check_interior(y, basis)
    x, y = np.broadcast_arrays(x, y)
    d = np.linalg.norm(x - y, axis=1)
    if np.any(d == 0):
        raise DomainError("the jump kernel needs x != y")
    out = _subordinate(_pair_kernel(x, y, basis), d, -1 - s, basis, q) * s / gamma(1 - s)
    return out if out.size > 1 else out[0]


def killing(s: float, x, basis: EigenBasis, q: SubordinationQuad = DEFAULT_SQ) -> np.ndarray:
    """kappa(x) = (s/Gamma(1-s)) int_0^inf (1 - int p(t, x, y) dy) t^{-1-s} dt."""
    _check_s(s)
    x = _check_interior(x, basis)
    d = basis.delta(x)

    def k(t, rows):
        surv = 1.0
        for i, L in enumerate(basis.sides):
            surv = surv * (1.0 - killed1(t / L ** 2, (x[rows, i] / L)[:, None]))
        return 1.0 - surv

    # beyond t_max the killed mass is 1 to within e^{-decay}; that tail is analytic
    _, _, hi = _log_t_rule(d, _lam1(basis), q)
    out = (_subordinate(k, d, -1 - s, basis, q) + np.exp(-s * hi) / s) * s / gamma(1 - s)
    return out if out.size > 1 else out[0]


def jump_and_kill(x, y, s: float, basis: EigenBasis, q: SubordinationQuad = DEFAULT_SQ) -> JumpKill:
    return JumpKill(float(jump_kernel(s, x, y, basis, q)), float(killing(s, x, basis, q)))


def half_line_killing_constant(s: float) -> float:
    """lim kappa(x) delta(x)^{2s} at a flat boundary: 4^s Gamma(s+1/2) / (sqrt(pi) Gamma(1-s))."""
    return 4 ** s * gamma(s + 0.5) / (np.sqrt(np.pi) * gamma(1 - s))


def _p1_regular(t, x, y):
    """p1(t, x, y) minus the free Gaussian of x - y, without cancellation for small t."""
    t, x, y = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (t, x, y)))
    out = np.empty(t.shape)
    small = t < T_SWITCH
    if np.any(small):
        ts, xs, ys = t[small], x[small], y[small]
        acc = np.zeros(ts.shape)
        for n in range(-IMAGES, IMAGES + 1):
            if n != 0:
                acc += _gauss(ts, xs - ys + 2 * n)
            acc -= _gauss(ts, xs + ys + 2 * n)
        out[small] = acc
    big = ~small
    if np.any(big):
        out[big] = p1(t[big], x[big], y[big]) - _gauss(t[big], x[big] - y[big])
    return out


def jump_remainder(s: float, x: float, y, q: SubordinationQuad = DEFAULT_SQ) -> np.ndarray:
    """J(x, y) - C_{1,s}|x-y|^{-1-2s} on (0, 1), bounded near the diagonal.

    The free Gaussian beyond the last subordination node is integrated in
    closed form with the lower incomplete gamma function.
    """
    from scipy.special import gammainc

    _check_s(s)
    y = np.atleast_1d(np.asarray(y, dtype=float))
    basis = EigenBasis((1.0,))
    d = np.minimum(x + y, 2.0 - x - y)
    ya = y

    def k(t, rows):
        return _p1_regular(t, x, ya[rows][:, None])

    body = _subordinate(k, d, -1 - s, basis, q)
    _, _, hi = _log_t_rule(d[:1], _lam1(basis), q)
    T = np.exp(hi)
    h2 = (x - y) ** 2 / 4
    a = 0.5 + s
    # int_T^inf (4 pi t)^{-1/2} e^{-h^2/4t} t^{-1-s} dt
    with np.errstate(divide="ignore"):
        far = np.where(h2 > 0, (4 * np.pi) ** -0.5 * h2 ** (-a) * gammainc(a, h2 / T) * gamma(a),
                       (4 * np.pi) ** -0.5 * T ** (-a) / a)
    return (body - far) * s / gamma(1 - s)


def spectral_apply_pv(test: Callable[[np.ndarray], np.ndarray], s: float, x: float,
                      q: SubordinationQuad = DEFAULT_SQ, order: int = 16, breaks: Sequence[float] = (),
                      n_uniform: int = 64) -> float:
    """PV int_0^1 [u(x) - u(y)] J(x, y) dy + kappa(x) u(x) on the interval.

    The free-space part C_{1,s}|x-y|^{-1-2s} of J is split off so the
    principal value reduces to a symmetric second difference; the remainder
    J - C|x-y|^{-1-2s} is bounded near the diagonal.  ``breaks`` lists points
    where the test function changes character (its support ends, say); they
    become panel ends together with ``n_uniform`` uniform panels.
    """
    _check_s(s)
    basis = EigenBasis((1.0,))
    C = C_Ns(1, s)
    ux = float(test(np.array([x]))[0])
    extra = np.concatenate([np.linspace(0.0, 1.0, n_uniform + 1), np.asarray(breaks, dtype=float)])

    def panels(a, b, graded):
        inner = extra[(extra > a) & (extra < b)]
        return np.unique(np.concatenate([_quad.interval_breaks(a, b, graded), inner]))

    # symmetric part on (x - r, x + r), r = min(x, 1 - x)
    r = min(x, 1 - x)
    hb = np.abs(extra - x)
    hb = hb[(hb > CORE * r) & (hb < r)]
    h, wh = _quad.panel_rule(np.unique(np.concatenate([r * np.geomspace(CORE, 1.0, 60), hb])), order)
    second = 2 * ux - test(x + h) - test(x - h)
    sym = float(np.sum(second * C * h ** (-1 - 2 * s) * wh))
    # below h0 the second difference is u''(x) h^2 to leading order; sampling it
    # there would only amplify rounding by h^{-1-2s}
    h0 = CORE * r
    d0 = 2 * ux - float(test(np.array([x + h0]))[0]) - float(test(np.array([x - h0]))[0])
    sym += d0 * C * h0 ** (-2 * s) / (2 - 2 * s)
    # the rest of (0, 1) beyond the symmetric window
    a, b = (x + r, 1.0) if x < 0.5 else (0.0, x - r)
    rest = 0.0
    if b - a > 1e-14:
        yy, wy = _quad.panel_rule(panels(a, b, [x + r if x < 0.5 else x - r]), order)
        rest = float(np.sum((ux - test(yy)) * C * np.abs(x - yy) ** (-1 - 2 * s) * wy))
    # remainder kernel over all of (0, 1)
    yy, wy = _quad.panel_rule(panels(0.0, 1.0, [x]), order)
    keep = yy != x
    yy, wy = yy[keep], wy[keep]
    rem = float(np.sum((ux - test(yy)) * jump_remainder(s, x, yy, q) * wy))
    kap = float(killing(s, np.array([x]), basis, q))
    return sym + rest + rem + kap * ux


# ---------------------------------------------------------------------------
# Poisson kernel and the weight h1


def spectral_poisson(x, b, s: float, basis: EigenBasis, q: SubordinationQuad = DEFAULT_SQ) -> np.ndarray:
    """P^s(x, b) = (1/Gamma(s)) int_0^inf (-d_nu p)(t, x, b) t^{s-1} dt.

    The normal derivative of the heat kernel is analytic (images or series),
    so no finite differences are involved.
    """
    _check_s(s, allow_one=True)
    x = _check_interior(x, basis)
    b = np.asarray(b, dtype=float).reshape(-1, basis.dim)
    x, b = np.broadcast_arrays(x, b)
    sides = [_boundary_side(pt, basis.sides) for pt in b]
    axis = np.array([a for a, _ in sides])
    at_zero = np.array([z for _, z in sides])
    d = np.linalg.norm(x - b, axis=1)

    def k(t, rows):
        out = np.ones(t.shape)
        for i, L in enumerate(basis.sides):
            xr = x[rows, i]
            on_side = (axis[rows] == i)[:, None]
            xi = np.where(at_zero[rows], xr, L - xr)
            p_i = p1(t / L ** 2, (xr / L)[:, None], (b[rows, i] / L)[:, None]) / L
            dp_i = dp1(t / L ** 2, (xi / L)[:, None]) / L ** 2
            out *= np.where(on_side, dp_i, p_i)
        return out

    out = _subordinate(k, d, s - 1, basis, q) / gamma(s)
    return out if out.size > 1 else out[0]


def poisson_series(x, b, s: float, basis: EigenBasis) -> np.ndarray:
    """Truncated spectral sum sum_j lambda_j^{-s} phi_j(x) (-d_nu phi_j(b)); converges slowly."""
    lam = basis.eigenvalues
    return (basis.phi(x) * basis.normal_derivs(b)) @ lam ** (-s)


def boundary_rule(basis: EigenBasis, n_panels: int = 32, order: int = 12, focus=None):
    """Boundary points and weights: the two endpoints, or Gauss panels on the rectangle sides."""
    if basis.dim == 1:
        return np.array([[0.0], [basis.sides[0]]]), np.ones(2)
    a, b = basis.sides
    pts, wts = [], []
    for axis, L_free, fixed in ((1, b, 0.0), (1, b, a), (0, a, 0.0), (0, a, b)):
        sing = []
        if focus is not None:
            sing = [float(np.clip(focus[axis], 0.0, L_free))]
        br = _quad.interval_breaks(0.0, L_free, sing + [0.0, L_free])
        t, w = _quad.panel_rule(br, order)
        keep = (t > 0) & (t < L_free)
        t, w = t[keep], w[keep]
        p = np.empty((len(t), 2))
        p[:, axis] = t
        p[:, 1 - axis] = fixed
        pts.append(p)
        wts.append(w)
    return np.concatenate(pts), np.concatenate(wts)


def h1_weight(x, s: float, basis: EigenBasis, q: SubordinationQuad = DEFAULT_SQ) -> np.ndarray:
    """h1(x) = int_{boundary} P^s(x, b) db."""
    x = _check_interior(x, basis)
    if basis.dim == 1:
        L = basis.sides[0]
        left = spectral_poisson(x, np.zeros_like(x), s, basis, q)
        right = spectral_poisson(x, np.full_like(x, L), s, basis, q)
        return np.atleast_1d(left + right)
    out = []
    for pt in x:
        bp, bw = boundary_rule(basis, focus=pt)
        out.append(float(np.atleast_1d(spectral_poisson(np.repeat(pt[None, :], len(bp), 0), bp, s, basis, q)) @ bw))
    return np.array(out)


# ---------------------------------------------------------------------------
# linear solves


def _interval_rule(breaks: Sequence[float], order: int) -> tuple[np.ndarray, np.ndarray]:
    return _quad.panel_rule(np.asarray(sorted(set(breaks))), order)


def spectral_solve(mu: Callable[[np.ndarray], np.ndarray] | None, zeta, x, s: float, basis: EigenBasis,
                   q: SubordinationQuad = DEFAULT_SQ, order: int = 12) -> float:
    """u(x) = int G^s(x, y) mu(y) dy + int_{boundary} P^s(x, b) zeta(b) db on the interval.

    ``zeta`` is a pair (value at 0, value at 1) on the interval.
    """
    if basis.dim != 1:
        raise DomainError("spectral_solve is implemented on the interval")
    x = float(_check_interior(x, basis)[0, 0])
    total = 0.0
    if mu is not None:
        br = _quad.interval_breaks(0.0, 1.0, [0.0, x, 1.0])
        y, w = _quad.panel_rule(br, order)
        keep = y != x
        y, w = y[keep], w[keep]
        G = green_subordinate(s, np.full(len(y), x), y, basis, q)
        total += float(np.sum(G * np.asarray(mu(y), dtype=float) * w))
    if zeta is not None:
        z0, z1 = zeta
        P = spectral_poisson(np.array([x, x]), np.array([0.0, 1.0]), s, basis, q)
        total += float(P[0] * z0 + P[1] * z1)
    return total


def compose_green(s1: float, s2: float, x: float, y: float, basis: EigenBasis,
                  q: SubordinationQuad = DEFAULT_SQ, order: int = 12) -> float:
    """int_0^1 G^{s1}(x, xi) G^{s2}(xi, y) d xi on the interval."""
    br = _quad.interval_breaks(0.0, 1.0, [0.0, x, y, 1.0])
    xi, w = _quad.panel_rule(br, order)
    keep = (xi != x) & (xi != y)
    xi, w = xi[keep], w[keep]
    a = green_subordinate(s1, np.full(len(xi), x), xi, basis, q)
    b = green_subordinate(s2, xi, np.full(len(xi), y), basis, q)
    return float(np.sum(a * b * w))


def compose_green_poisson(s: float, x: float, basis: EigenBasis, q: SubordinationQuad = DEFAULT_SQ,
                          order: int = 12) -> float:
    """int_0^1 G^{1-s}(x, xi) P^s(xi, 0) d xi on the interval; equals 1 - x."""
    br = _quad.interval_breaks(0.0, 1.0, [0.0, x, 1.0])
    xi, w = _quad.panel_rule(br, order)
    keep = xi != x
    xi, w = xi[keep], w[keep]
    a = green_subordinate(1 - s, np.full(len(xi), x), xi, basis, q)
    b = spectral_poisson(xi, np.zeros(len(xi)), s, basis, q)
    return float(np.sum(a * b * w))


# ---------------------------------------------------------------------------
# large solutions for the power nonlinearity


@dataclass
class SpectralLadder:
    deltas: np.ndarray
    levels: np.ndarray
    iterates: np.ndarray
    monotone: bool
    envelope_exponent: float
    envelope_C: float
    envelope_ok: bool


def spectral_range(s: float) -> tuple[float, float]:
    return (1 + s, 1 / (1 - s))


def green_operator_interval(s: float, deltas: Sequence[float], order: int = 10, depth: float = 1e-9,
                            q: SubordinationQuad = DEFAULT_SQ):
    """Nystrom operator for G^s on (0, 1) at nodes x = delta, for symmetric sources.

    Panels are graded toward both endpoints and broken at every node, where
    the kernel has its diagonal cusp.
    """
    from .semilinear_ko import LinearOperator

    d = np.asarray(sorted(set(float(v) for v in deltas) | {0.5}, reverse=True))
    if np.any(d <= 0) or np.any(d > 0.5):
        raise DomainError("node deltas must lie in (0, 1/2]")
    half = np.concatenate([np.geomspace(depth, 0.5, 40), d])
    br = np.unique(np.concatenate([[0.0], half, 1.0 - half, [1.0]]))
    y, w = _quad.panel_rule(br, order)
    basis = EigenBasis((1.0,))
    X = np.repeat(d, len(y))
    Y = np.tile(y, len(d))
    G = green_subordinate(s, X, Y, basis, q)
    pd = np.minimum(y, 1 - y)
    return LinearOperator(s, d[:, None], d, np.tile(y, len(d))[:, None], np.tile(pd, len(d)),
                          G * np.tile(w, len(d)), np.repeat(np.arange(len(d)), len(y)), np.arange(len(d)), False)


def h1_profile(s: float, q: SubordinationQuad = DEFAULT_SQ) -> Callable[[np.ndarray], np.ndarray]:
    """h1 on (0, 1) as a function of delta, tabulated in log delta with monotone cubic interpolation."""
    from scipy.interpolate import PchipInterpolator

    basis = EigenBasis((1.0,))
    dd = np.geomspace(1e-12, 0.5, 200)
    hv = h1_weight(dd, s, basis, q)
    interp = PchipInterpolator(np.log(dd), np.log(hv))
    lo_slope = (np.log(hv[1]) - np.log(hv[0])) / (np.log(dd[1]) - np.log(dd[0]))

    def h(delta):
        delta = np.asarray(delta, dtype=float)
        L = np.log(np.maximum(delta, 1e-300))
        out = np.where(L < np.log(dd[0]), np.log(hv[0]) + lo_slope * (L - np.log(dd[0])),
                       interp(np.clip(L, np.log(dd[0]), np.log(0.5))))
        return np.exp(out)

    return h


def large_solution_spectral(p: float, s: float, basis: EigenBasis, levels: Sequence[float] = (1, 2, 3, 4, 5),
                            probes: Sequence[float] | None = None, tol: float = 1e-10,
                            k_max: int = 60, rtol: float = 1e-8) -> SpectralLadder:
    """Solve u_j = j h1 - G^s[u_j^p] for each level j on the interval and check the ladder.

    Probes are distances to the boundary (the solutions are symmetric).
    """
    from .semilinear_ko import scheme

    if basis.dim != 1:
        raise DomainError("large_solution_spectral is implemented on the interval")
    lo, hi = spectral_range(s)
    if not lo < p < hi:
        raise DomainError(f"p={p!r} is outside the admissible interval ({lo}, {hi}) for s={s}")
    probes = np.geomspace(0.3, 1e-4, 17) if probes is None else np.asarray(probes, dtype=float)
    nodes = np.concatenate([probes, np.geomspace(1e-4, 1e-8, 13)])
    op = green_operator_interval(s, nodes)
    h = h1_profile(s)
    res = scheme(op, h, -1, lambda t: t ** p, lambda t: p * t ** (p - 1), [(float(j), 0.0) for j in levels],
                 k_max=k_max, tol=tol, rtol=rtol)
    if not res.converged:
        raise ConvergenceError("the fixed point of the ladder level did not converge")
    top = res.iterates[-1]
    collar = (op.node_delta <= 0.05) & (op.node_delta >= 1e-6)
    dl, ul = np.log(op.node_delta[collar]), np.log(top[collar])
    expo = float(np.polyfit(dl, ul, 1)[0])
    target = -2 * s / (p - 1)
    C = float(np.max(top * op.node_delta ** (-target)))
    return SpectralLadder(op.node_delta, np.asarray(levels, dtype=float), res.iterates, res.monotone, expo, C,
                          bool(expo >= target - 0.05))
