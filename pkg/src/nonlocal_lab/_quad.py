"""Composite Gauss rules on geometrically graded panels, and sphere rules.

Every improper or endpoint-singular integral in the package goes through
these helpers.  Panels shrink geometrically toward declared singular
points, so algebraic singularities ``|t - t0|**a`` with ``a > -1`` are
integrated to near machine precision without knowing ``a``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import gamma, pi

import numpy as np

GRADE_RATIO = 0.15
# innermost panel width relative to the graded interval
GRADE_FLOOR = 1e-12


@lru_cache(maxsize=64)
def gauss_legendre(m: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights of the m-point Gauss-Legendre rule on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(m)
    return 0.5 * (x + 1.0), 0.5 * w


def graded_breaks(a: float, b: float, left: bool, right: bool,
                  ratio: float = GRADE_RATIO, floor: float = GRADE_FLOOR) -> np.ndarray:
    """Panel endpoints on [a, b], graded toward ``a`` and/or ``b``."""
    if b <= a:
        return np.array([a, b])
    if left and right:
        mid = 0.5 * (a + b)
        lo = graded_breaks(a, mid, True, False, ratio, floor)
        hi = graded_breaks(mid, b, False, True, ratio, floor)
        return np.concatenate([lo, hi[1:]])
    n_lev = max(1, int(np.ceil(np.log(floor) / np.log(ratio))))
    geo = ratio ** np.arange(n_lev, 0, -1)
    if left:
        return np.concatenate([[a], a + (b - a) * geo, [b]])
    if right:
        return np.concatenate([[a], b - (b - a) * geo[::-1], [b]])
    return np.array([a, b])


def panel_rule(breaks: np.ndarray, m: int) -> tuple[np.ndarray, np.ndarray]:
    """Composite m-point Gauss rule on the panels delimited by ``breaks``."""
    breaks = np.asarray(breaks, dtype=float)
    x0, w0 = gauss_legendre(m)
    h = np.diff(breaks)
    keep = h > 0
    lo, h = breaks[:-1][keep], h[keep]
    nodes = (lo[:, None] + h[:, None] * x0[None, :]).ravel()
    weights = (h[:, None] * w0[None, :]).ravel()
    return nodes, weights


@dataclass(frozen=True)
class Rule:
    """A pair of composite rules sharing panels; the low one gives an error estimate."""

    nodes: np.ndarray
    weights: np.ndarray
    nodes_lo: np.ndarray
    weights_lo: np.ndarray


def composite(breaks: np.ndarray, m: int = 12, m_lo: int = 7) -> Rule:
    n, w = panel_rule(breaks, m)
    nl, wl = panel_rule(breaks, m_lo)
    return Rule(n, w, nl, wl)


def interval_breaks(a: float, b: float, singular: list[float] | tuple[float, ...] = (),
                    ratio: float = GRADE_RATIO, floor: float = GRADE_FLOOR,
                    geometric_from: float | None = None) -> np.ndarray:
    """Breaks on [a, b] graded toward every point of ``singular`` inside [a, b].

    ``geometric_from`` adds dyadic breaks a*2**k (for kernels decaying like
    a power of t on long intervals starting at ``a > 0``).
    """
    inner = [p for p in singular if a <= p <= b]
    pts = sorted({a, b, *inner})
    if geometric_from is not None and a > 0:
        k = np.arange(1, int(np.log2(b / a)) + 1)
        # dyadic breaks too close to a singular point would make its graded panels degenerate
        geo = [g for g in (a * 2.0 ** k).tolist() if all(abs(g - p) > 0.25 * g for p in inner)]
        pts = sorted(set(pts) | set(geo))
        pts = [p for p in pts if a <= p <= b]
    sing = set(singular)
    scale = max(abs(a), abs(b))
    out = [np.array([pts[0]])]
    for lo, hi in zip(pts[:-1], pts[1:]):
        if hi - lo <= 0:
            continue
        fl = min(0.5, max(floor, floor * scale / (hi - lo)))
        br = graded_breaks(lo, hi, lo in sing, hi in sing, ratio, fl)
        out.append(br[1:])
    return np.concatenate(out)


def sphere_area(n: int) -> float:
    """Surface measure of the unit sphere S^{n-1} in R^n."""
    return 2.0 * pi ** (n / 2) / gamma(n / 2)


def sphere_rule(dim: int, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Directions and weights integrating over S^{dim-1} (dim in 1..3).

    dim=2 uses the n-point trapezoid rule; dim=3 a Gauss(n//2) x trapezoid(n)
    product rule.  Weights sum to the sphere area.
    """
    if dim == 1:
        return np.array([[1.0], [-1.0]]), np.array([1.0, 1.0])
    if dim == 2:
        th = 2 * pi * np.arange(n) / n
        return np.column_stack([np.cos(th), np.sin(th)]), np.full(n, 2 * pi / n)
    if dim == 3:
        nz = max(2, n // 2)
        z, wz = np.polynomial.legendre.leggauss(nz)
        ph = 2 * pi * np.arange(n) / n
        zz, pp = np.meshgrid(z, ph, indexing="ij")
        r = np.sqrt(1 - zz ** 2)
        dirs = np.column_stack([(r * np.cos(pp)).ravel(), (r * np.sin(pp)).ravel(), zz.ravel()])
        w = (wz[:, None] * np.full(n, 2 * pi / n)[None, :]).ravel()
        return dirs, w
    raise NotImplementedError(f"sphere rules are implemented for dim <= 3, got {dim}")


def orthonormal_complement(axis: np.ndarray) -> np.ndarray:
    """Rows spanning the orthogonal complement of a unit vector."""
    axis = np.asarray(axis, dtype=float)
    q, _ = np.linalg.qr(np.column_stack([axis, np.eye(axis.size)]))
    return q[:, 1:axis.size].T


def axis_sphere_rule(axis: np.ndarray, alpha_breaks: np.ndarray, n_ring: int = 64,
                     m: int = 12) -> tuple[np.ndarray, np.ndarray]:
    """Quadrature on S^{dim-1} in polar coordinates about ``axis``.

    theta = cos(a) axis + sin(a) psi with a in [0, pi] integrated on the given
    panels and psi on S^{dim-2}.  Suited to integrands peaked near ``axis``.
    """
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    dim = axis.size
    if dim == 1:
        return np.array([[1.0], [-1.0]]), np.array([1.0, 1.0])
    a, wa = panel_rule(alpha_breaks, m)
    comp = orthonormal_complement(axis)
    if dim == 2:
        psi = np.array([[1.0], [-1.0]])
        wpsi = np.array([1.0, 1.0])
    else:
        psi, wpsi = sphere_rule(dim - 1, n_ring)
    ring = psi @ comp
    dirs = (np.cos(a)[:, None, None] * axis[None, None, :]
            + np.sin(a)[:, None, None] * ring[None, :, :])
    w = (wa * np.sin(a) ** (dim - 2))[:, None] * wpsi[None, :]
    return dirs.reshape(-1, dim), w.ravel()
