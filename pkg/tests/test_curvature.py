import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, strategies as st

from nonlocal_lab import curvature as cv
from nonlocal_lab.errors import DomainError


def _paraboloid_oracle(s, N=3):
    """Order-swapped form (2^{-2s}/s) int_0^inf tau^{-2s} (1+tau^2)^{-s-N/2} dtau, by mpmath quadrature."""
    h = lambda u: (1 + u * u) ** (-s - mp.mpf(N) / 2)
    with mp.workdps(30):
        # w = tau^{1-2s} removes the endpoint singularity on [0, 1]
        near = mp.quad(lambda w: h(w ** (1 / (1 - 2 * s))), [0, 1]) / (1 - 2 * s)
        far = mp.quad(lambda u: u ** (-2 * s) * h(u), [1, mp.inf])
        return float(2 ** (-2 * s) / s * (near + far))


@pytest.mark.parametrize("t", [0.1, 1.0, 7.0])
@pytest.mark.parametrize("N", [3, 4])
def test_inner_integral_oracle(t, N):
    s = 0.3
    ref = float(mp.quad(lambda u: (1 + u * u) ** (-s - mp.mpf(N) / 2), [0, t]))
    assert float(cv.inner_F(t, s, N)) == pytest.approx(ref, rel=1e-12)
    assert float(cv.inner_F(-t, s, N)) == pytest.approx(-ref, rel=1e-12)
    assert float(cv.inner_F(np.inf, s, N)) == pytest.approx(float(mp.quad(
        lambda u: (1 + u * u) ** (-s - mp.mpf(N) / 2), [0, mp.inf])), rel=1e-12)


@pytest.mark.parametrize("s", [0.1, 0.3, 0.45])
def test_paraboloid_closed_form(s):
    ref = _paraboloid_oracle(s)
    assert cv.paraboloid_curvature(s) == pytest.approx(ref, rel=1e-8)
    r = cv.directional_curvature(cv.paraboloid(), [1.0, 0.0], s)
    assert r.value == pytest.approx(ref, rel=1e-7)
    assert r.err_est < 1e-6 * r.value


@given(th=st.floats(0.0, 2 * math.pi))
def test_paraboloid_isotropic(th):
    s = 0.3
    r = cv.directional_curvature(cv.paraboloid(), [math.cos(th), math.sin(th)], s)
    assert r.value == pytest.approx(cv.paraboloid_curvature(s), rel=1e-7)


def test_radial_matches_directional():
    s = 0.3
    rad = cv.radial_curvature(lambda rho: 0.5 * rho ** 2, s, 3)
    assert rad.value == pytest.approx(cv.paraboloid_curvature(s), rel=1e-7)


def test_saddle_cancels():
    s = 0.3
    sd = cv.saddle()
    a = cv.directional_curvature(sd, [1.0, 0.0], s).value
    b = cv.directional_curvature(sd, [0.0, 1.0], s).value
    assert a == pytest.approx(-b, rel=1e-10)
    assert abs(cv.mean_curvature_avg(sd, s, n_dirs=16)) < 1e-9
    assert abs(cv.mean_curvature_pv(sd, s)) < 1e-6


@pytest.mark.parametrize("make", [cv.paraboloid, cv.damped_quadratic])
def test_mean_curvature_pv_equals_direction_average(make):
    s = 0.3
    surf = make()
    assert cv.mean_curvature_pv(surf, s) == pytest.approx(cv.mean_curvature_avg(surf, s), abs=1e-3)


@pytest.mark.parametrize("th", [0.1, math.pi / 8, math.pi / 4, 1.3])
@pytest.mark.parametrize("s", [0.1, 0.3])
def test_es2_closed_form(th, s):
    assert cv.es2_curvature(th, s) == pytest.approx(cv.es2_closed_form(th, s), rel=1e-6)


def test_es2_extrema():
    s = 0.3
    assert cv.es2_curvature(0.0, s) == 0.0
    assert cv.es2_curvature(math.pi / 2, s) == 0.0
    th = np.linspace(0, math.pi / 2, 91)
    K = [cv.es2_curvature(t, s) for t in th]
    assert th[int(np.argmax(K))] == pytest.approx(math.pi / 4)


def test_es2_direct_integral_agrees():
    # the reduced formula against the directional curvature of 8 x^2 y^2
    s, th = 0.3, 0.4
    direct = cv.directional_curvature(cv.es2_surface(), [math.cos(th), math.sin(th)], s)
    assert direct.value == pytest.approx(cv.es2_closed_form(th, s), rel=1e-5)


def test_sweep_approaches_classical():
    res = cv.asymptotic_sweep(cv.paraboloid(), [1.0, 0.0], [0.3, 0.4, 0.45, 0.49, 0.499])
    assert res.target == pytest.approx(1.0)
    assert res.contract_ok
    assert res.deviations[-1] < 0.05
    with pytest.raises(DomainError):
        cv.asymptotic_sweep(cv.paraboloid(), [1.0, 0.0], [0.4, 0.3])


def test_prescribed_extrema_verified():
    pr = cv.prescribed_extrema([(math.pi / 2, math.pi / 2)], [(0.0, 0.0)], 0.3)
    assert pr.verified
    assert pr.K_minus < pr.K_grid.min() and pr.K_grid.max() < pr.K_plus
    assert pr.weight(np.array([math.pi / 2]))[0] == 0.0
    assert pr.weight(np.array([0.0]))[0] == 1.0


def test_prescribed_extrema_rejects():
    with pytest.raises(cv.ConstructionError):
        cv.prescribed_extrema([(0.0, 1.0)], [(0.5, 2.0)])
    with pytest.raises(cv.ConstructionError):
        cv.prescribed_extrema([(1.0, 0.5)], [(2.0, 2.0)])
    with pytest.raises(DomainError):
        cv.prescribed_extrema([], [(0.0, 0.0)])


def test_surface_validation():
    with pytest.raises(DomainError):
        cv.GraphSurface(2, lambda x: np.zeros(len(x)))
    with pytest.raises(DomainError):
        cv.GraphSurface(3, lambda x: np.ones(len(x)))
    with pytest.raises(DomainError):
        cv.GraphSurface(3, lambda x: x[:, 0])
    with pytest.raises(DomainError):
        cv.directional_curvature(cv.paraboloid(), [1.0, 0.0], 0.5)
    with pytest.raises(DomainError):
        cv.directional_curvature(cv.paraboloid(), [0.0, 0.0], 0.3)
