"""Walk-on-spheres Monte Carlo for (-Lap)^s u = f in a domain, u = g outside.

Each step jumps from the centre of the largest admissible ball (radius
``kappa * delta``) to a point drawn from the exact exit law of that ball and
scores ``gamma(N, s, r) * f(centre)``.  Walks stop when they land outside the
domain, where they score the exterior datum.

Walkers are simulated in fixed-size blocks; block ``b`` of probe point ``i``
draws from a Philox stream keyed by ``(seed, i, b)``.  Results therefore do
not depend on how blocks are distributed over worker threads.
"""

from __future__ import annotations

import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DomainError
from .kernels import KernelParams, gamma_radius

CENSOR_POLICIES = ("zero", "datum-at-nearest")
BLOCK_SIZE = 4096


@dataclass(frozen=True)
class Domain:
    """Open bounded set described by its signed distance (positive inside).

    ``center`` is an interior point from which the set is star-shaped; it is
    only used by the datum integrability heuristic.
    """

    sdf: Callable[[np.ndarray], np.ndarray]
    g: Callable[[np.ndarray], np.ndarray]
    bounding_radius: float
    inside_fn: Callable[[np.ndarray], np.ndarray] | None = None
    center: tuple[float, ...] | None = None

    def inside(self, pts: np.ndarray) -> np.ndarray:
        if self.inside_fn is not None:
            return np.asarray(self.inside_fn(pts), dtype=bool)
        return self.sdf(pts) > 0


def ball_domain(g: Callable[[np.ndarray], np.ndarray], N: int, center=None, radius: float = 1.0) -> Domain:
    c = np.zeros(N) if center is None else np.asarray(center, dtype=float)

    def sdf(p):
        return radius - np.linalg.norm(np.atleast_2d(p) - c, axis=-1)

    return Domain(sdf=sdf, g=g, bounding_radius=radius + float(np.linalg.norm(c)), center=tuple(c))


@dataclass(frozen=True)
class WalkConfig:
    kappa: float = 0.5
    max_steps: int = 1000
    n_samples: int = 10_000
    seed: int = 0
    censor_policy: str = "zero"
    workers: int | None = None
    check_datum: bool = False

    def __post_init__(self):
        if not 0.0 < self.kappa < 1.0:
            raise DomainError(f"kappa must lie in (0, 1), got kappa={self.kappa!r}")
        if self.n_samples < 1:
            raise DomainError(f"n_samples must be >= 1, got n_samples={self.n_samples!r}")
        if self.max_steps < 1:
            raise DomainError(f"max_steps must be >= 1, got max_steps={self.max_steps!r}")
        if self.censor_policy not in CENSOR_POLICIES:
            raise DomainError(f"censor_policy must be one of {CENSOR_POLICIES}, got {self.censor_policy!r}")


@dataclass(frozen=True)
class MCEstimate:
    mean: float
    stderr: float
    n: int
    censored: int

    @staticmethod
    def from_scores(scores: np.ndarray, censored: int = 0) -> "MCEstimate":
        n = scores.size
        se = float(np.std(scores, ddof=1) / np.sqrt(n)) if n > 1 else float("inf")
        return MCEstimate(float(np.mean(scores)), se, int(n), int(censored))


def _worker_count(cfg: WalkConfig) -> int:
    if cfg.workers is not None:
        return max(1, int(cfg.workers))
    env = os.environ.get("NONLOCAL_LAB_THREADS")
    if env:
        return max(1, int(env))
    return max(1, os.cpu_count() or 1)


def block_rng(seed: int, point_index: int, block_index: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed) & (2 ** 64 - 1), spawn_key=(int(point_index), int(block_index)))
    return np.random.Generator(np.random.Philox(ss))


def _directions(n: int, N: int, rng: np.random.Generator) -> np.ndarray:
    if N == 1:
        return np.where(rng.random(n) < 0.5, -1.0, 1.0)[:, None]
    z = rng.standard_normal((n, N))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def sample_exit_batch(x: np.ndarray, r: np.ndarray, s: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Landing points of jumps leaving balls B(x_i, r_i), plus the directions used.

    |y - x| / r = W^{-1/2} with W ~ Beta(s, 1-s), i.e. (1 - V)^{-1/2} with V ~ Beta(1-s, s).
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    n, N = x.shape
    w = rng.beta(s, 1.0 - s, size=n)
    # W = 0 has probability zero but can occur in floating point
    w = np.maximum(w, np.finfo(float).tiny)
    rho = w ** -0.5
    om = _directions(n, N, rng)
    return x + (np.asarray(r, dtype=float) * rho)[:, None] * om, om


def sample_exit(x, r: float, params: KernelParams, rng: np.random.Generator) -> np.ndarray:
    """One draw from the exit law eta_r(. - x) of the ball B_r(x)."""
    if not r > 0:
        raise DomainError(f"r must be positive, got r={r!r}")
    x = np.asarray(x, dtype=float).reshape(1, params.N)
    y, _ = sample_exit_batch(x, np.array([r]), params.s, rng)
    return y[0]


def _nearest_exterior(domain: Domain, x: np.ndarray, om: np.ndarray) -> np.ndarray:
    """First point outside the domain along x + t*om, by sphere tracing."""
    t = np.zeros(len(x))
    tol = 1e-10 * domain.bounding_radius
    for _ in range(200):
        d = domain.sdf(x + t[:, None] * om)
        if np.all(d <= tol):
            break
        t = t + np.maximum(d, 0.0)
    return x + (t + 2 * tol)[:, None] * om


@dataclass
class WalkPaths:
    """Recorded walks: ball centres and radii per step, exit points, censoring."""

    N: int
    s: float
    centers: np.ndarray
    radii: np.ndarray
    walker: np.ndarray
    exits: np.ndarray
    censored: np.ndarray
    n: int

    def source_scores(self, f: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
        """Per-walker sum of gamma(N,s,r_k) f(x_k)."""
        contrib = gamma_radius(self.N, self.s, self.radii) * np.asarray(f(self.centers), dtype=float)
        return np.bincount(self.walker, weights=contrib, minlength=self.n)

    def datum_scores(self, g: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
        out = np.zeros(self.n)
        ok = ~np.isnan(self.exits[:, 0])
        if np.any(ok):
            out[ok] = np.asarray(g(self.exits[ok]), dtype=float)
        return out

    def estimate(self, f=None, g=None) -> MCEstimate:
        scores = np.zeros(self.n)
        if f is not None:
            scores += self.source_scores(f)
        if g is not None:
            scores += self.datum_scores(g)
        return MCEstimate.from_scores(scores, int(self.censored.sum()))


def _walk_block(domain: Domain, f, x0: np.ndarray, params: KernelParams, cfg: WalkConfig,
                n: int, rng: np.random.Generator, record: bool):
    N, s = params.N, params.s
    pos = np.repeat(x0[None, :], n, axis=0)
    alive = np.ones(n, dtype=bool)
    score = np.zeros(n)
    exits = np.full((n, N), np.nan)
    last_dir = np.zeros((n, N))
    rec_c, rec_r, rec_w = [], [], []
    idx_all = np.arange(n)
    for _ in range(cfg.max_steps):
        idx = idx_all[alive]
        if idx.size == 0:
            break
        xc = pos[idx]
        r = cfg.kappa * domain.sdf(xc)
        if f is not None:
            score[idx] += gamma_radius(N, s, r) * np.asarray(f(xc), dtype=float)
        if record:
            rec_c.append(xc)
            rec_r.append(r)
            rec_w.append(idx)
        y, om = sample_exit_batch(xc, r, s, rng)
        pos[idx] = y
        last_dir[idx] = om
        out = ~domain.inside(y)
        done = idx[out]
        exits[done] = y[out]
        alive[done] = False
    censored = alive.copy()
    if np.any(censored) and cfg.censor_policy == "datum-at-nearest":
        ci = idx_all[censored]
        # last_dir points along the final jump; pos is the (still interior) landing point
        exits[ci] = _nearest_exterior(domain, pos[ci], last_dir[ci])
    return score, exits, censored, rec_c, rec_r, rec_w


def _blocks(n_samples: int) -> list[tuple[int, int]]:
    return [(b, min(BLOCK_SIZE, n_samples - b * BLOCK_SIZE)) for b in range(-(-n_samples // BLOCK_SIZE))]


def _run(domain: Domain, f, x, params: KernelParams, cfg: WalkConfig, point_index: int, record: bool):
    x0 = np.asarray(x, dtype=float).reshape(params.N)
    if not bool(domain.inside(x0[None, :])[0]):
        raise DomainError(f"starting point {x0.tolist()} is not inside the domain")
    blocks = _blocks(cfg.n_samples)

    def job(bn):
        b, n = bn
        return _walk_block(domain, f, x0, params, cfg, n, block_rng(cfg.seed, point_index, b), record)

    workers = min(_worker_count(cfg), len(blocks))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(job, blocks))
    else:
        results = [job(bn) for bn in blocks]
    return results


def wos_paths(domain: Domain, x, params: KernelParams, cfg: WalkConfig, point_index: int = 0) -> WalkPaths:
    """Simulate and store walks so that several (f, g) pairs can reuse them."""
    results = _run(domain, None, x, params, cfg, point_index, record=True)
    centers, radii, walker, exits, cens = [], [], [], [], []
    offset = 0
    for (_, ex, ce, rc, rr, rw), (_, n) in zip(results, _blocks(cfg.n_samples)):
        if rc:
            centers.append(np.concatenate(rc))
            radii.append(np.concatenate(rr))
            walker.append(np.concatenate(rw) + offset)
        exits.append(ex)
        cens.append(ce)
        offset += n
    return WalkPaths(params.N, params.s, np.concatenate(centers), np.concatenate(radii),
                     np.concatenate(walker), np.concatenate(exits), np.concatenate(cens), offset)


def wos_scores(domain: Domain, f, x, params: KernelParams, cfg: WalkConfig, point_index: int = 0):
    """Per-walk scores (in deterministic sample order) and the censored count."""
    if cfg.check_datum:
        datum_integrability_check(domain, params)
    results = _run(domain, f, x, params, cfg, point_index, record=False)
    scores, censored = [], 0
    for sc, ex, ce, *_ in results:
        ok = ~np.isnan(ex[:, 0])
        if np.any(ok):
            sc = sc.copy()
            sc[ok] += np.asarray(domain.g(ex[ok]), dtype=float)
        scores.append(sc)
        censored += int(ce.sum())
    return np.concatenate(scores), censored


def wos_estimate(domain: Domain, f, x, params: KernelParams, cfg: WalkConfig, point_index: int = 0) -> MCEstimate:
    """Monte Carlo estimate of u(x) for (-Lap)^s u = f in the domain, u = g outside.

    ``f`` may be None for the homogeneous problem.
    """
    scores, censored = wos_scores(domain, f, x, params, cfg, point_index)
    return MCEstimate.from_scores(scores, censored)


def wos_field(domain: Domain, f, grid, params: KernelParams, cfg: WalkConfig) -> list[MCEstimate]:
    """wos_estimate over a list of points; point i uses streams keyed by (seed, i, block)."""
    if cfg.check_datum:
        datum_integrability_check(domain, params)
    quiet = WalkConfig(cfg.kappa, cfg.max_steps, cfg.n_samples, cfg.seed, cfg.censor_policy, cfg.workers, False)
    return [wos_estimate(domain, f, x, params, quiet, point_index=i) for i, x in enumerate(grid)]


@dataclass(frozen=True)
class IntegrabilityReport:
    shell_sums: list[float] = field(default_factory=list)
    ok: bool = True


def datum_integrability_check(domain: Domain, params: KernelParams, n_dirs: int = 64,
                              levels: int = 24) -> IntegrabilityReport:
    """Heuristic test of int |g| min(delta^-s, delta^-(N+2s)) < infinity.

    Shell sums over dyadic layers next to the boundary and dyadic far shells
    are computed along rays from ``domain.center``; if the last sums of
    either family are not small relative to the total a warning is issued.
    """
    N, s = params.N, params.s
    c = np.zeros(N) if domain.center is None else np.asarray(domain.center, dtype=float)
    R = domain.bounding_radius
    rng = np.random.Generator(np.random.Philox(12345))
    om = _directions(n_dirs, N, rng)
    # boundary distance along each ray by sphere tracing
    b = _nearest_exterior(domain, np.repeat(c[None, :], n_dirs, axis=0), om)
    rb = np.linalg.norm(b - c, axis=1)
    xg, wg = np.polynomial.legendre.leggauss(6)
    xg, wg = 0.5 * (xg + 1), 0.5 * wg

    def shell(t0, t1):
        t = t0 + (t1 - t0) * xg
        pts = c[None, None, :] + (rb[:, None] + t[None, :])[:, :, None] * om[:, None, :]
        flat = pts.reshape(-1, N)
        dist = np.maximum(-domain.sdf(flat), 1e-300)
        wt = np.minimum(dist ** -s, dist ** (-N - 2 * s))
        val = np.abs(np.asarray(domain.g(flat), dtype=float)) * wt
        jac = (rb[:, None] + t[None, :]) ** (N - 1)
        return float(np.mean((val.reshape(n_dirs, -1) * jac) @ (wg * (t1 - t0))))

    near = [shell(R * 2.0 ** (-k - 1), R * 2.0 ** (-k)) for k in range(levels)]
    far = [shell(R * 2.0 ** k, R * 2.0 ** (k + 1)) for k in range(levels)]
    sums = near + far
    total = sum(sums)
    ok = bool(np.isfinite(total)) and all(sum(part[-3:]) <= 0.05 * max(total, 1e-300) for part in (near, far))
    if not ok:
        warnings.warn("exterior datum may violate the integrability condition: shell sums are not Cauchy",
                      RuntimeWarning, stacklevel=2)
    return IntegrabilityReport(sums, ok)
