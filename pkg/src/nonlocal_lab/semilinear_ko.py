"""Keller-Osserman machinery and monotone schemes for semilinear problems.

A nonlinearity is described by a :class:`NonlinearProfile`.  Growth tests
are carried out in log coordinates ``L = log t`` so that the very large
arguments needed to see tail behaviour never overflow.

The iteration schemes work on a radial node set of the unit ball.  A linear
solve ``u = harm + sign * G[src]`` is represented by a :class:`LinearOperator`
(node value = weighted sum of source values at sample points), built either
from stored walk-on-spheres paths or from the closed-form Green quadrature.
Because every iteration reuses the same sample points, discrete comparison
principles hold exactly, not just in expectation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import sparse
from scipy.optimize import brentq
from scipy.sparse.linalg import spsolve
from scipy.special import logsumexp

from . import _quad
from .ball_solver import green_rule_ball
from .errors import ConvergenceError, DomainError, KOViolationError, ResolutionError, SchemeViolationError
from .kernels import BallGeometry, KernelParams, gamma_radius, torsion_ball
from .pv_eval import QuadConfig, ScalarField, frac_laplacian_pv
from .wos import WalkConfig, ball_domain, wos_paths

# ---------------------------------------------------------------------------
# profiles


@dataclass(frozen=True)
class NonlinearProfile:
    """f on (0, inf) with derivative, antiderivative and structural bounds.

    ``log_f(L)`` returns log f(e^L) and ``log_F(L)`` log F(e^L); when
    ``log_F`` is absent it is computed by quadrature of f in log coordinates.
    ``m`` and ``M`` are the declared bounds 1+m <= t f'/f <= 1+M (``M=None``
    means no finite bound is claimed).
    """

    f: Callable[[np.ndarray], np.ndarray]
    fprime: Callable[[np.ndarray], np.ndarray]
    m: float
    M: float | None
    log_f: Callable[[np.ndarray], np.ndarray] | None = None
    log_F: Callable[[np.ndarray], np.ndarray] | None = None
    phi_closed: Callable[[np.ndarray], np.ndarray] | None = None
    psi_closed: Callable[[np.ndarray], np.ndarray] | None = None
    name: str = "custom"

    def logf(self, L) -> np.ndarray:
        L = np.asarray(L, dtype=float)
        if self.log_f is not None:
            return self.log_f(L)
        return np.log(self.f(np.exp(L)))

    def logF(self, L) -> np.ndarray:
        L = np.asarray(L, dtype=float)
        if self.log_F is not None:
            return self.log_F(L)
        return _log_antiderivative(self.logf, L)

    def F(self, t) -> np.ndarray:
        return np.exp(self.logF(np.log(np.asarray(t, dtype=float))))


def _log_antiderivative(logf, L: np.ndarray, width: float = 80.0, panels: int = 40) -> np.ndarray:
    """log int_0^{e^L} f(t) dt = log int_{-inf}^{L} f(e^u) e^u du, by Gauss panels on [L-width, L]."""
    x, w = _quad.gauss_legendre(16)
    br = np.linspace(0.0, 1.0, panels + 1)
    # nodes graded toward the upper end, where the integrand is largest
    h = 1.0 - (1.0 - br) ** 2
    nodes = (h[:-1, None] + np.diff(h)[:, None] * x[None, :]).ravel()
    wts = (np.diff(h)[:, None] * w[None, :]).ravel() * width
    flat = np.atleast_1d(L).ravel()
    u = flat[:, None] - width + width * nodes[None, :]
    g = logf(u) + u
    out = logsumexp(g, b=np.broadcast_to(wts, g.shape), axis=1)
    return out.reshape(np.shape(L))


def _log1pexp(L):
    return np.logaddexp(0.0, L)


def power_profile(p: float) -> NonlinearProfile:
    """f(t) = t^p with closed forms for F, phi and psi."""
    if not p > 1:
        raise DomainError(f"power profile needs p > 1, got p={p!r}")
    k = 2 * np.sqrt(p + 1) / (p - 1)
    return NonlinearProfile(
        f=lambda t: np.asarray(t, dtype=float) ** p,
        fprime=lambda t: p * np.asarray(t, dtype=float) ** (p - 1),
        m=p - 1, M=p - 1,
        log_f=lambda L: p * L,
        log_F=lambda L: (p + 1) * L - np.log(p + 1),
        phi_closed=lambda u: k * np.asarray(u, dtype=float) ** ((1 - p) / 2),
        psi_closed=lambda v: (np.asarray(v, dtype=float) / k) ** (2 / (1 - p)),
        name=f"power(p={p})",
    )


def lower_critical_profile(s: float, alpha: float) -> NonlinearProfile:
    """f(t) = t^{1+2s} ln^alpha(1+t)."""
    q = 1 + 2 * s

    def f(t):
        t = np.asarray(t, dtype=float)
        return t ** q * np.log1p(t) ** alpha

    def fp(t):
        t = np.asarray(t, dtype=float)
        lg = np.log1p(t)
        return q * t ** (q - 1) * lg ** alpha + alpha * t ** q * lg ** (alpha - 1) / (1 + t)

    return NonlinearProfile(f, fp, m=2 * s, M=2 * s + alpha,
                            log_f=lambda L: q * L + alpha * np.log(_log1pexp(L)),
                            name=f"lower_critical(s={s}, alpha={alpha})")


def upper_critical_profile(s: float, beta: float) -> NonlinearProfile:
    """f(t) = t^{(1+s)/(1-s)} ln^{-beta}(1+t).

    The declared lower bound m = 2s/(1-s) - beta is positive only for small
    beta; larger beta still gives a valid profile for classification.
    """
    q = (1 + s) / (1 - s)
    if not beta > 0:
        raise DomainError(f"upper critical profile needs beta > 0, got beta={beta!r}")

    def f(t):
        t = np.asarray(t, dtype=float)
        return t ** q * np.log1p(t) ** (-beta)

    def fp(t):
        t = np.asarray(t, dtype=float)
        lg = np.log1p(t)
        return q * t ** (q - 1) * lg ** (-beta) - beta * t ** q * lg ** (-beta - 1) / (1 + t)

    return NonlinearProfile(f, fp, m=q - 1 - beta, M=q - 1,
                            log_f=lambda L: q * L - beta * np.log(_log1pexp(L)),
                            name=f"upper_critical(s={s}, beta={beta})")


def exponential_profile() -> NonlinearProfile:
    """f(t) = e^t - 1, which has no finite upper structural bound."""

    def log_f(L):
        t = np.exp(np.asarray(L, dtype=float))
        # log(e^t - 1) = t + log(1 - e^-t), which stays finite for huge t
        with np.errstate(divide="ignore"):
            return np.where(t > 1.0, t + np.log(-np.expm1(-t)), np.log(np.expm1(np.minimum(t, 1.0))))

    return NonlinearProfile(lambda t: np.expm1(t), lambda t: np.exp(t), m=0.0, M=None,
                            log_f=log_f, name="exponential")


@dataclass(frozen=True)
class ProfileCheck:
    m_hat: float
    M_hat: float
    ok: bool


def profile_check(p: NonlinearProfile, grid) -> ProfileCheck:
    """Empirical bounds of t f'(t)/f(t) - 1 on ``grid`` against the declared (m, M)."""
    t = np.asarray(grid, dtype=float)
    if np.any(t <= 0):
        raise DomainError("profile_check needs a grid inside (0, inf)")
    with np.errstate(over="ignore", invalid="ignore"):
        fv = np.asarray(p.f(t), dtype=float)
        fpv = np.asarray(p.fprime(t), dtype=float)
    if np.any(fv <= 0) or np.any(fpv <= 0):
        raise DomainError(f"f and f' must be positive on the grid ({p.name})")
    with np.errstate(over="ignore", invalid="ignore"):
        r = t * fpv / fv - 1.0
    r = np.where(np.isfinite(r), r, np.inf)
    m_hat, M_hat = float(np.min(r)), float(np.max(r))
    ok = 0 < m_hat <= M_hat < np.inf and p.M is not None and p.m <= m_hat + 1e-12 and M_hat <= p.M + 1e-12
    return ProfileCheck(m_hat, M_hat, bool(ok))


# ---------------------------------------------------------------------------
# phi, psi


def _log_phi_integrand(p: NonlinearProfile, L):
    return L - 0.5 * p.logF(L)


def phi_eval(p: NonlinearProfile, u: float, max_span: float = 2e4) -> float:
    """phi(u) = int_u^inf F(t)^{-1/2} dt."""
    if not u > 0:
        raise DomainError(f"phi needs u > 0, got u={u!r}")
    if p.phi_closed is not None:
        return float(p.phi_closed(u))
    x, w = _quad.gauss_legendre(16)
    L0 = float(np.log(u))
    total, a, width, prev = 0.0, L0, 1.0, None
    while a - L0 < max_span:
        nodes = a + width * x
        part = float(np.exp(_log_phi_integrand(p, nodes)) @ w) * width
        total += part
        if prev is not None and part < 1e-15 * total and part <= prev:
            return total
        prev = part
        a += width
        width = min(2 * width, 64.0)
    raise KOViolationError(f"the Keller-Osserman integral does not converge for {p.name}")


@dataclass
class PsiTable:
    """Tabulated inverse of phi, monotone cubic in log-log coordinates."""

    log_v: np.ndarray
    log_u: np.ndarray

    def __call__(self, v):
        from scipy.interpolate import PchipInterpolator

        lv = np.log(np.asarray(v, dtype=float))
        interp = PchipInterpolator(self.log_v[::-1], self.log_u[::-1], extrapolate=True)
        return np.exp(interp(lv))


def psi_eval(p: NonlinearProfile, v: float, rtol: float = 1e-12, max_expand: int = 400) -> float:
    """psi(v) = phi^{-1}(v), by bracketing in log u and Brent's method."""
    if not v > 0:
        raise DomainError(f"psi needs v > 0, got v={v!r}")
    if p.psi_closed is not None:
        return float(p.psi_closed(v))
    lo = hi = 0.0
    flo = fhi = phi_eval(p, 1.0) - v
    for _ in range(max_expand):
        if flo > 0 and fhi < 0:
            break
        if flo <= 0:
            lo -= 1.0
            flo = phi_eval(p, np.exp(lo)) - v
        if fhi >= 0:
            hi += 1.0
            fhi = phi_eval(p, np.exp(hi)) - v
    else:
        raise ConvergenceError(f"no bracket for psi({v}) within the expansion budget")
    if flo == 0:
        return float(np.exp(lo))
    root = brentq(lambda L: phi_eval(p, np.exp(L)) - v, lo, hi, xtol=1e-14, rtol=rtol)
    return float(np.exp(root))


def psi_table(p: NonlinearProfile, u_min: float = 1e-6, u_max: float = 1e12, n: int = 400) -> PsiTable:
    lu = np.linspace(np.log(u_min), np.log(u_max), n)
    lv = np.log([phi_eval(p, float(np.exp(a))) for a in lu])
    return PsiTable(lv, lu)


# ---------------------------------------------------------------------------
# classification


@dataclass(frozen=True)
class KOClass:
    """True / False, or None when the fitted exponent falls in the dead zone."""

    KO: bool | None
    L1: bool | None
    E: bool | None


TAIL_WINDOW = (20.0, 200.0)
MARGIN = 0.05


def tail_exponents(log_integrand: Callable[[np.ndarray], np.ndarray],
                   window: tuple[float, float] = TAIL_WINDOW, n: int = 64) -> tuple[float, float]:
    """Fit log I(t) = c - a log t - b log log t over log t in ``window``; returns (a, b)."""
    L = np.linspace(window[0], window[1], n)
    A = np.column_stack([-L, -np.log(L), np.ones_like(L)])
    coef, *_ = np.linalg.lstsq(A, log_integrand(L), rcond=None)
    return float(coef[0]), float(coef[1])


def tail_converges(log_integrand, margin: float = MARGIN) -> bool | None:
    """Decide int^inf I(t) dt < inf from fitted exponents, with a dead zone of width margin."""
    a, b = tail_exponents(log_integrand)
    if a > 1 + margin:
        return True
    if a < 1 - margin:
        return False
    if abs(a - 1) > 1e-3:
        return None
    if b > 1 + margin:
        return True
    if b < 1 - margin:
        return False
    return None


def ko_classify(p: NonlinearProfile, s: float, margin: float = MARGIN) -> KOClass:
    if not 0 < s < 1:
        raise DomainError(f"s must lie in (0, 1), got s={s!r}")
    ko = tail_converges(lambda L: _log_phi_integrand(p, L) - L, margin)
    l1 = tail_converges(lambda L: (L - p.logf(L)) / (2 * s), margin)
    e = tail_converges(lambda L: p.logf(L) - 2 * L / (1 - s), margin)
    return KOClass(ko, l1, e)


def power_range(s: float, operator: str = "restricted") -> tuple[float, float]:
    """Open interval of powers p for which large solutions of the power problem exist."""
    if not 0 < s < 1:
        raise DomainError(f"s must lie in (0, 1), got s={s!r}")
    if operator == "restricted":
        return (1 + 2 * s, 1 + 2 * s / (1 - s))
    if operator == "spectral":
        return (1 + s, 1 / (1 - s))
    raise DomainError(f"operator must be 'restricted' or 'spectral', got {operator!r}")


# ---------------------------------------------------------------------------
# supersolution


@dataclass(frozen=True)
class Scale:
    mu: float = 1.0
    lam: float = 0.0


def _require_l1(p: NonlinearProfile, s: float):
    if ko_classify(p, s).L1 is not True:
        raise KOViolationError(f"{p.name} violates the integrability condition needed for U in L^1 (s={s})")


def supersolution_value(p: NonlinearProfile, s: float, domain: BallGeometry, x, scale: Scale = Scale()) -> float:
    """mu psi(delta(x)^s) + lambda xi(x) on a ball, xi its torsion function."""
    _require_l1(p, s)
    if scale.mu < 1:
        raise DomainError(f"mu must be >= 1, got mu={scale.mu!r}")
    x = np.asarray(x, dtype=float)
    N = x.size
    d = domain.radius - float(np.linalg.norm(x - domain.c))
    if d <= 0:
        raise DomainError("x must lie inside the ball")
    xi = torsion_ball(KernelParams(N, s), domain, x)
    return scale.mu * psi_eval(p, d ** s) + scale.lam * float(xi)


def supersolution_field(p: NonlinearProfile, s: float, domain: BallGeometry, scale: Scale = Scale()) -> ScalarField:
    """The supersolution as a field on R^N (zero outside the ball), for PV evaluation."""
    _require_l1(p, s)
    psi = p.psi_closed if p.psi_closed is not None else psi_table(p)
    c, R = domain.c, domain.radius
    N = c.size
    params = KernelParams(N, s)

    def ev(pts):
        d = R - np.linalg.norm(pts - c, axis=1)
        out = np.zeros(len(pts))
        inside = d > 0
        out[inside] = scale.mu * psi(d[inside] ** s) + scale.lam * torsion_ball(params, domain, pts[inside])
        return out

    return ScalarField(ev, "compact", support=(tuple(c), R), singular_spheres=((tuple(c), R),))


@dataclass(frozen=True)
class SupersolutionCertificate:
    C: float
    mu: float
    ratios: tuple[float, ...]


def certify_supersolution(p: NonlinearProfile, s: float, domain: BallGeometry, collar: Sequence[float],
                          q: QuadConfig = QuadConfig(n_dirs=32)) -> SupersolutionCertificate:
    """Estimate C with (-Lap)^s U >= -C f(U) on a collar grid, and mu = max(1, C^{1/m}).

    With that mu, mu U satisfies (-Lap)^s (mu U) >= -f(mu U) at the grid points,
    because f(mu t) >= mu^{1+m} f(t).
    """
    U = supersolution_field(p, s, domain)
    N = domain.c.size
    params = KernelParams(N, s)
    ratios = []
    for d in collar:
        x = domain.c.copy()
        x[0] += domain.radius - d
        val = frac_laplacian_pv(U, params, x, q).value
        ratios.append(-val / float(p.f(U(x[None, :])[0])))
    C = max(0.0, max(ratios))
    mu = max(1.0, C ** (1.0 / p.m)) if C > 0 else 1.0
    return SupersolutionCertificate(C, mu, tuple(ratios))


# ---------------------------------------------------------------------------
# linear operators on a radial node set


@dataclass
class LinearOperator:
    """Node values (G src)(x_i) = mean over groups of sums of weights * src(points).

    Monte Carlo operators have one group per walk; quadrature operators one
    group per node.  Nodes and points carry their distance to the boundary,
    which is all the radial schemes need.
    """

    s: float
    node_points: np.ndarray
    node_delta: np.ndarray
    points: np.ndarray
    point_delta: np.ndarray
    weights: np.ndarray
    group: np.ndarray
    group_node: np.ndarray
    stochastic: bool

    @property
    def nodes(self) -> np.ndarray:
        return self.node_points

    def _group_counts(self) -> np.ndarray:
        return np.bincount(self.group_node, minlength=len(self.node_delta))

    def apply(self, vals: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        gsum = np.bincount(self.group, weights=self.weights * vals, minlength=len(self.group_node))
        n = self._group_counts()
        mean = np.bincount(self.group_node, weights=gsum, minlength=len(n)) / n
        if not self.stochastic:
            return mean, np.zeros_like(mean)
        sq = np.bincount(self.group_node, weights=(gsum - mean[self.group_node]) ** 2, minlength=len(n))
        return mean, np.sqrt(sq / (n - 1) / n)

    def matrix(self, dvals: np.ndarray) -> sparse.csr_matrix:
        """Sparse (nodes x points) matrix of d(apply)/d(src values) scaled by dvals."""
        n = self._group_counts()
        row = self.group_node[self.group]
        data = self.weights * dvals / n[row]
        return sparse.csr_matrix((data, (row, np.arange(len(data)))), shape=(len(n), len(data)))


def _node_deltas(deltas: Sequence[float]) -> np.ndarray:
    d = np.asarray(sorted(set(float(v) for v in deltas) | {1.0}, reverse=True), dtype=float)
    if np.any(d <= 0) or np.any(d > 1):
        raise DomainError("node deltas must lie in (0, 1]")
    return d


def _axis_nodes(d: np.ndarray, N: int) -> np.ndarray:
    x = np.zeros((len(d), N))
    x[:, 0] = 1.0 - d
    return x


def _delta_from_omr2(a: np.ndarray) -> np.ndarray:
    a = np.clip(a, 0.0, 1.0)
    return a / (1.0 + np.sqrt(1.0 - a))


def wos_ball_operator(params: KernelParams, deltas: Sequence[float], cfg: WalkConfig) -> LinearOperator:
    """Green operator of the unit ball from stored walk-on-spheres paths (one set per node)."""
    d = _node_deltas(deltas)
    dom = ball_domain(lambda y: np.zeros(len(y)), params.N)
    pts, dl, wts, grp, gnode = [], [], [], [], []
    offset = 0
    for i, x in enumerate(_axis_nodes(d, params.N)):
        paths = wos_paths(dom, x, params, cfg, point_index=i)
        pts.append(paths.centers)
        dl.append(_delta_from_omr2(1.0 - np.sum(paths.centers ** 2, axis=1)))
        wts.append(gamma_radius(params.N, params.s, paths.radii))
        grp.append(paths.walker + offset)
        gnode.append(np.full(paths.n, i))
        offset += paths.n
    return LinearOperator(params.s, _axis_nodes(d, params.N), d, np.concatenate(pts), np.concatenate(dl),
                          np.concatenate(wts), np.concatenate(grp), np.concatenate(gnode), True)


def quad_ball_operator(params: KernelParams, deltas: Sequence[float], order: int = 12,
                       n_dirs: int = 64) -> LinearOperator:
    """Green operator of the unit ball from the closed-form kernel quadrature."""
    d = _node_deltas(deltas)
    pts, dl, wts, grp = [], [], [], []
    for i, x in enumerate(_axis_nodes(d, params.N)):
        rule = green_rule_ball(params, x, order, n_dirs)
        pts.append(rule.points)
        dl.append(rule.delta)
        wts.append(rule.weights)
        grp.append(np.full(len(rule.weights), i))
    return LinearOperator(params.s, _axis_nodes(d, params.N), d, np.concatenate(pts), np.concatenate(dl),
                          np.concatenate(wts), np.concatenate(grp), np.arange(len(d)), False)


def martin_profile(N: int, s: float) -> Callable[[np.ndarray], np.ndarray]:
    """Martin mass of the unit ball as a function of delta = 1 - |x|."""
    area = _quad.sphere_area(N)
    return lambda d: area * (d * (2.0 - d)) ** (s - 1)


# ---------------------------------------------------------------------------
# monotone schemes


@dataclass(frozen=True)
class SemilinearProblem:
    """(-Lap)^s u = sign * f(u) in the unit ball.

    The s-harmonic part is ``g_const`` (a constant exterior datum, so the
    harmonic extension is that constant) plus ``h`` times the Martin mass
    profile |S^{N-1}| (1-|x|^2)^{s-1}, whose weighted trace is h.  A ladder
    is requested through ``h_levels`` or ``g_levels``.
    """

    sign: int
    f: NonlinearProfile | Callable[[np.ndarray], np.ndarray]
    fprime: Callable[[np.ndarray], np.ndarray] | None = None
    g_const: float = 0.0
    h: float = 0.0
    h_levels: Sequence[float] | None = None
    g_levels: Sequence[float] | None = None

    def __post_init__(self):
        if self.sign not in (1, -1):
            raise DomainError(f"sign must be +1 or -1, got {self.sign!r}")
        if self.h_levels is not None and self.g_levels is not None:
            raise DomainError("give h_levels or g_levels, not both")

    def fn(self):
        if isinstance(self.f, NonlinearProfile):
            f, fp = self.f.f, self.f.fprime
        else:
            f, fp = self.f, self.fprime
        if fp is None:
            def fp(t):
                h = 1e-7 * np.maximum(1.0, np.abs(t))
                lo = np.maximum(t - h, 0.0)
                return (f(t + h) - f(lo)) / (t + h - lo)
        return f, fp


@dataclass
class IterationResult:
    deltas: np.ndarray
    iterates: np.ndarray
    stderr: np.ndarray
    monotone: bool
    bounded_by: bool | None = None
    lower: np.ndarray | None = None
    converged: bool = True
    info: dict = field(default_factory=dict)


class _Discretisation:
    """u(y) = base(delta(y)) * W(delta(y)^s), W piecewise linear through the node values.

    The node at delta = 0 carries the prescribed trace of u / base.
    """

    def __init__(self, op: LinearOperator, base_fn, trace: float):
        s = op.s
        self.z_nodes = op.node_delta ** s
        order = np.argsort(self.z_nodes)
        zs = np.concatenate([[0.0], self.z_nodes[order]])
        zp = op.point_delta ** s
        k = np.clip(np.searchsorted(zs, zp, side="right") - 1, 0, len(zs) - 2)
        t = np.clip((zp - zs[k]) / (zs[k + 1] - zs[k]), 0.0, 1.0)
        self.trace = trace
        self.base_nodes = base_fn(op.node_delta)
        self.base_pts = base_fn(op.point_delta)
        n = len(self.z_nodes)
        rows = np.concatenate([np.arange(len(zp)), np.arange(len(zp))])
        full = sparse.csr_matrix((np.concatenate([1 - t, t]), (rows, np.concatenate([k, k + 1]))),
                                 shape=(len(zp), n + 1)).tocsc()
        perm = np.empty(n, dtype=int)
        perm[order] = np.arange(n)
        self.phi_trace = np.asarray(full[:, 0].todense()).ravel()
        self.phi = full[:, 1:][:, perm].tocsr()

    def u_points(self, w: np.ndarray) -> np.ndarray:
        return self.base_pts * (self.phi @ w + self.phi_trace * self.trace)


def _solve_level(op: LinearOperator, disc: _Discretisation, harm_nodes: np.ndarray, sign: int, f, fprime,
                 w0: np.ndarray, k_max: int, tol: float):
    """Squeeze (sign -) or monotone (sign +) iteration, Newton polish when it stalls.

    Returns the principal sequence, its lower companion (sign -), the final
    stderr and a convergence flag.
    """
    base = disc.base_nodes

    def T(w):
        u = np.maximum(disc.u_points(w), 0.0)
        g, se = op.apply(f(u))
        return (harm_nodes + sign * g) / base, se / base

    def rel(a, b):
        return float(np.max(np.abs(a - b) / np.maximum(1.0, np.abs(a))))

    seq, low = [], []
    if sign < 0:
        lower = np.zeros_like(w0)
        upper, se = T(lower)
        seq.append(upper)
        for _ in range(k_max):
            lower, _ = T(upper)
            low.append(lower)
            new_upper, se = T(lower)
            seq.append(new_upper)
            gap = rel(new_upper, lower)
            upper = new_upper
            if gap < tol:
                return seq, low, se, True
        w = 0.5 * (upper + lower)
    else:
        w = w0.copy()
        for _ in range(k_max):
            new, se = T(w)
            seq.append(new)
            if rel(new, w) < tol:
                return seq, low, se, True
            w = new
    for _ in range(50):
        u = disc.u_points(w)
        tw, se = T(w)
        R = w - tw
        if rel(w, tw) < tol:
            seq.append(w.copy())
            return seq, low, se, True
        dfu = np.where(u > 0, fprime(np.maximum(u, 1e-300)), 0.0) * disc.base_pts
        J = sparse.identity(len(w)) - sign * sparse.diags(1.0 / base) @ op.matrix(dfu) @ disc.phi
        w = w - spsolve(J.tocsc(), R)
    seq.append(w.copy())
    return seq, low, se, False


def _monotone(rows: np.ndarray, errs: np.ndarray, increasing: bool, stochastic: bool, sigmas: float,
              rtol: float) -> bool:
    diffs = np.diff(rows, axis=0)
    if stochastic:
        slack = sigmas * np.sqrt(errs[1:] ** 2 + errs[:-1] ** 2)
    else:
        slack = rtol * np.maximum(1.0, np.abs(rows[1:]))
    return bool(np.all(diffs >= -slack)) if increasing else bool(np.all(diffs <= slack))


def scheme(op: LinearOperator, base_fn, sign: int, f, fprime, levels: Sequence[tuple[float, float]],
           k_max: int = 60, tol: float = 1e-10, sigmas: float = 3.0, rtol: float = 1e-8) -> IterationResult:
    """Generic driver: u = trace * base + g + sign * G f(u) at each (trace, g) level.

    With a single level the iterates of the scheme itself are returned;
    with several, one converged solution per level.
    """
    n = len(op.node_delta)
    rows, errs, lower = [], [], None
    converged = True
    w0 = np.zeros(n)
    for trace, g in levels:
        disc = _Discretisation(op, base_fn, trace)
        harm = trace * disc.base_nodes + g
        seq, low, se, ok = _solve_level(op, disc, harm, sign, f, fprime, w0, k_max, tol)
        converged &= ok
        w0 = seq[-1]
        if sign < 0 and not op.stochastic and np.any(seq[-1] < -1e-6 * max(1.0, abs(trace))):
            raise ResolutionError("the discrete solution turned negative: the node set does not resolve "
                                  "the boundary layer, add nodes closer to the boundary")
        if len(levels) == 1:
            rows = [w * disc.base_nodes for w in seq]
            errs = [se * disc.base_nodes] * len(seq)
            lower = np.array([w * disc.base_nodes for w in low]) if low else None
        else:
            rows.append(seq[-1] * disc.base_nodes)
            errs.append(se * disc.base_nodes)
    rows, errs = np.array(rows), np.array(errs)
    increasing = len(levels) > 1 or sign > 0
    mono = _monotone(rows, errs, increasing, op.stochastic, sigmas, rtol)
    return IterationResult(op.node_delta, rows, errs, mono, None, lower, converged)


def monotone_iterate(problem: SemilinearProblem, solver: LinearOperator, k_max: int = 60,
                     tol: float = 1e-10, supersolution: Callable[[np.ndarray], np.ndarray] | None = None,
                     mc_sigmas: float = 3.0) -> IterationResult:
    """Run the monotone scheme at the solver's nodes (a radial node set of the unit ball).

    Without a ladder, ``iterates`` is the principal sequence (decreasing from
    the s-harmonic start for sign -, increasing from 0 for sign +).  With
    ``h_levels`` or ``g_levels`` each row is the converged solution of one
    level, and ``monotone`` refers to the ordering across levels.
    """
    op = solver
    N = op.node_points.shape[1]
    f, fprime = problem.fn()
    uses_h = problem.h_levels is not None or problem.h != 0.0
    base_fn = martin_profile(N, op.s) if uses_h else (lambda d: np.ones_like(d))
    if problem.h_levels is not None:
        levels = [(float(h), problem.g_const) for h in problem.h_levels]
    elif problem.g_levels is not None:
        levels = [(problem.h, float(g)) for g in problem.g_levels]
    else:
        levels = [(problem.h, problem.g_const)]
    if not uses_h:
        # with base 1 the trace node carries the datum itself
        levels = [(g, 0.0) for _, g in levels]
    res = scheme(op, base_fn, problem.sign, f, fprime, levels, k_max, tol, mc_sigmas)
    if supersolution is not None:
        ub = np.asarray(supersolution(op.nodes), dtype=float)
        res.bounded_by = bool(np.all(res.iterates[-1] <= ub + mc_sigmas * res.stderr[-1] + 1e-12 * np.abs(ub)))
    return res


def checked_iterate(problem: SemilinearProblem, solver: LinearOperator, **kw) -> IterationResult:
    """monotone_iterate, raising SchemeViolationError when monotonicity fails."""
    res = monotone_iterate(problem, solver, **kw)
    if not res.monotone:
        raise SchemeViolationError("monotone scheme produced a non-monotone sequence beyond tolerance")
    return res
