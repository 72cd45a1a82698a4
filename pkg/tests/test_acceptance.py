"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest -v -s tests/test_acceptance.py`` or
``python3 tests/test_acceptance.py``.
"""

import math
import time

import numpy as np
import pytest

from nonlocal_lab import curvature as cv
from nonlocal_lab import spectral as sp
from nonlocal_lab.kernels import KernelParams, c_Ns, explicit_sharmonic
from nonlocal_lab.pv_eval import frac_laplacian_pv, sharmonic_field, torsion_field
from nonlocal_lab.rates import expected_rate, rate_experiment
from nonlocal_lab.semilinear_ko import (SemilinearProblem, ko_classify, lower_critical_profile,
                                        monotone_iterate, power_profile, power_range, quad_ball_operator,
                                        upper_critical_profile)
from nonlocal_lab.wos import WalkConfig, ball_domain, wos_field

BASIS = sp.EigenBasis((1.0,))


@pytest.fixture
def verdict(capsys):
    def emit(number: int, title: str, ok: bool, detail: str):
        with capsys.disabled():
            print(f"\ncriterion {number} {title}: {detail} - {'PASS' if ok else 'FAIL'}")
        assert ok, detail

    return emit


def _probes(N: int, n: int, r_max: float) -> np.ndarray:
    k = np.arange(n)
    r = r_max * k / (n - 1)
    pts = np.zeros((n, N))
    pts[:, 0], pts[:, 1] = r * np.cos(0.7 * k), r * np.sin(0.7 * k)
    return pts


def test_c01_sharmonicity(verdict):
    t0 = time.perf_counter()
    worst, ok = 0.0, True
    for s in (0.3, 0.7):
        kp = KernelParams(2, s)
        for sigma in (0.1, 0.5 * (1 - s)):
            u = sharmonic_field(kp, sigma)
            for x in _probes(2, 10, 0.85):
                r = frac_laplacian_pv(u, kp, x)
                bound = max(r.err_est, 1e-4 * float(explicit_sharmonic(kp, sigma, x)))
                ok &= abs(r.value) <= bound
                worst = max(worst, abs(r.value) / bound)
    dt = time.perf_counter() - t0
    verdict(1, "s-harmonicity of u_sigma", ok and dt < 30,
            f"40 probes, max |Lu|/bound = {worst:.2e}, {dt:.1f} s < 30 s")


def test_c02_torsion(verdict):
    kp = KernelParams(2, 0.5)
    v = torsion_field(kp)
    dev = max(abs(frac_laplacian_pv(v, kp, x).value - 1) for x in _probes(2, 5, 0.8))
    verdict(2, "torsion identity", dev <= 1e-3, f"5 probes, max |Lv - 1| = {dev:.2e} <= 1e-3")


def _wos_run(workers):
    kp = KernelParams(2, 0.5)
    sigma = 0.25
    dom = ball_domain(lambda y: explicit_sharmonic(kp, sigma, y), 2)
    cfg = WalkConfig(n_samples=100_000, seed=2024, workers=workers)
    return kp, wos_field(dom, None, [np.zeros(2)], kp, cfg)[0]


def test_c03_wos_vs_closed_form(verdict):
    t0 = time.perf_counter()
    kp, est = _wos_run(1)
    dt = time.perf_counter() - t0
    exact = c_Ns(2, 0.5)
    dev = abs(est.mean - exact)
    rel = est.stderr / exact
    ok = dev <= 3 * est.stderr and rel < 0.01 and dt < 60
    verdict(3, "walk-on-spheres vs closed form", ok,
            f"|mean - c(N,s)| = {dev:.2e} <= 3 stderr = {3 * est.stderr:.2e}, stderr/value = {rel:.2e}, {dt:.1f} s")


def test_c04_rate_table(verdict):
    s = 0.6
    kp = KernelParams(1, s)
    parts, ok = [], True
    for beta in (s / 2, s, s + 0.4):
        a, lg = expected_rate("rhs", beta, s)
        fit = rate_experiment("rhs", beta, kp)
        ok &= abs(fit.exponent - a) <= 0.05 and fit.log_factor == lg
        parts.append(f"beta={beta:g}: {fit.exponent:.3f} vs {a:.3f} log {fit.log_factor}")
    verdict(4, "boundary-rate table", ok, "; ".join(parts))


def test_c05_ko_classifiers(verdict):
    s = 0.5
    checks = [
        (ko_classify(power_profile(1.2), s).KO, True),
        (ko_classify(power_profile(1 + 2 * s - 0.2), s).L1, False),
        (ko_classify(power_profile(1 + 2 * s + 0.2), s).L1, True),
        (ko_classify(power_profile((1 + s) / (1 - s) - 0.2), s).E, True),
        (ko_classify(power_profile((1 + s) / (1 - s) + 0.2), s).E, False),
        (ko_classify(lower_critical_profile(s, 2 * s - 0.2), s).L1, False),
        (ko_classify(lower_critical_profile(s, 2 * s + 0.2), s).L1, True),
        (ko_classify(upper_critical_profile(s, 0.8), s).E, False),
        (ko_classify(upper_critical_profile(s, 1.2), s).E, True),
    ]
    n = sum(got is want for got, want in checks)
    verdict(5, "Keller-Osserman classifiers", n == 9, f"{n}/9 booleans correct")


def test_c06_power_range(verdict):
    r, sp_ = power_range(0.5), power_range(0.5, "spectral")
    verdict(6, "power ranges", r == (2.0, 3.0) and sp_ == (1.5, 2.0), f"restricted {r}, spectral {sp_}")


def test_c07_ladders(verdict):
    kp = KernelParams(1, 0.5)
    op = quad_ball_operator(kp, np.geomspace(0.5, 1e-8, 25), order=10, n_dirs=32)
    res = monotone_iterate(SemilinearProblem(-1, power_profile(2.5), h_levels=[1, 2, 3, 4, 5]), op)
    steps = np.diff(res.iterates, axis=0)
    slack = 3 * np.sqrt(res.stderr[1:] ** 2 + res.stderr[:-1] ** 2)
    restricted_ok = bool(np.all(steps >= -slack)) and res.converged
    lad = sp.large_solution_spectral(2.0, 0.75, BASIS)
    worst = float(np.min(np.diff(lad.iterates, axis=0)))
    target = -2 * 0.75 / (2.0 - 1)
    spectral_ok = worst >= -1e-8 and lad.envelope_exponent >= target - 0.05
    verdict(7, "large-solution ladders", restricted_ok and spectral_ok,
            f"restricted min step {float(steps.min()):.3e}; spectral min step {worst:.3e} >= -1e-8, "
            f"envelope {lad.envelope_exponent:.3f} >= {target - 0.05:.3f}")


def test_c08_spectral_identities(verdict):
    t0 = time.perf_counter()
    pairs = [(x, y) for x in (0.05, 0.3, 0.5) for y in (0.1, 0.45, 0.9)]
    g_dev = max(abs(float(sp.green_subordinate(s, x, y, BASIS)) - sp.green_polylog(s, x, y))
                for s in (0.25, 0.5, 0.75) for x, y in pairs)
    comp = [
        abs(sp.compose_green(0.5, 0.5, 0.3, 0.6, BASIS) - sp.green_polylog(1.0, 0.3, 0.6)),
        abs(sp.compose_green(0.25, 0.5, 0.3, 0.6, BASIS) - sp.green_polylog(0.75, 0.3, 0.6)),
        abs(sp.compose_green_poisson(0.5, 0.3, BASIS) - 0.7),
    ]
    d = np.geomspace(1e-6, 1e-3, 7)
    slopes = {s: float(np.polyfit(np.log(d), np.log(sp.h1_weight(d, s, BASIS)), 1)[0]) for s in (0.25, 0.5, 0.75)}
    s_dev = max(abs(v + (2 - 2 * s)) for s, v in slopes.items())
    dt = time.perf_counter() - t0
    ok = g_dev <= 1e-6 and max(comp) <= 1e-5 and s_dev <= 0.05 and dt < 120
    verdict(8, "spectral identities", ok,
            f"Green dev {g_dev:.1e} <= 1e-6, composition dev {max(comp):.1e} <= 1e-5, "
            f"h1 slope dev {s_dev:.3f} <= 0.05, {dt:.1f} s")


def test_c09_killing_rate(verdict):
    d = np.geomspace(0.01, 0.2, 12)
    parts, ok = [], True
    for s in (0.25, 0.5, 0.75):
        c = sp.half_line_killing_constant(s)
        scaled = np.atleast_1d(sp.killing(s, d, BASIS)) * d ** (2 * s) / c
        ok &= bool(np.all((scaled >= 0.5) & (scaled <= 2.0)))
        parts.append(f"s={s}: [{scaled.min():.3f}, {scaled.max():.3f}]")
    verdict(9, "killing rate bracket [c/2, 2c]", ok, "kappa delta^2s / c in " + ", ".join(parts))


def test_c10_curvature_suite(verdict):
    t0 = time.perf_counter()
    s = 0.3
    surf = cv.paraboloid()
    nll = abs(cv.mean_curvature_pv(surf, s) - cv.mean_curvature_avg(surf, s))
    th = np.linspace(0.0, 2 * math.pi, 721)
    K = np.array([cv.es2_curvature(t, s) for t in th])
    zeros = K[0] == 0.0 and K[180] == 0.0
    i = int(np.argmax(K))
    off = abs((th[i] - math.pi / 4 + math.pi / 4) % (math.pi / 2) - math.pi / 4)
    ratio = float(np.mean(K[:-1])) / ((K.min() + K.max()) / 2)
    sweep = cv.asymptotic_sweep(surf, [1.0, 0.0], [0.3, 0.4, 0.45, 0.49, 0.499])
    pr = cv.prescribed_extrema([(math.pi / 2, math.pi / 2)], [(0.0, 0.0)], s)
    dt = time.perf_counter() - t0
    ok = (nll <= 1e-3 and zeros and off <= th[1] + 1e-12 and ratio >= 4 / math.pi - 0.02
          and sweep.deviations[-1] < 0.05 and pr.verified and len(pr.grid) == 16 and dt < 120)
    verdict(10, "curvature suite", ok,
            f"NLL dev {nll:.1e}; es2 zeros {zeros}, argmax offset {off:.1e}, ratio {ratio:.4f} >= "
            f"{4 / math.pi - 0.02:.4f}; sweep end dev {sweep.deviations[-1]:.4f}; "
            f"prescribed extrema verified {pr.verified}; {dt:.1f} s")


def test_c11_determinism(verdict):
    _, a = _wos_run(1)
    _, b = _wos_run(8)
    _, c = _wos_run(8)
    same = (a.mean, a.stderr, a.n) == (b.mean, b.stderr, b.n) == (c.mean, c.stderr, c.n)
    verdict(11, "Monte Carlo determinism", same, f"workers 1 vs 8: mean {a.mean!r} vs {b.mean!r}")


if __name__ == "__main__":
    raise SystemExit(pytest.main(["-v", "-s", __file__]))
