import mpmath as mp
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nonlocal_lab import ConvergenceError, DomainError
from nonlocal_lab.kernels import KernelParams, explicit_sharmonic
from nonlocal_lab.pv_eval import (DualityGrid, QuadConfig, ScalarField, duality_residual, exit_average,
                                  field_sum, frac_laplacian_checked, frac_laplacian_pv, mean_value_residual,
                                  sharmonic_field, torsion_field)


def gaussian(N):
    return ScalarField(lambda p: np.exp(-np.sum(p * p, axis=1)), "integrable")


def gaussian_oracle(s, x):
    # Fourier side in one dimension: (1/pi) int_0^inf k^{2s} sqrt(pi) e^{-k^2/4} cos(k x) dk
    f = lambda k: k ** (2 * s) * mp.sqrt(mp.pi) * mp.exp(-k * k / 4) * mp.cos(k * x)
    return float(mp.quad(f, [0, 4, 8, mp.inf]) / mp.pi)


@pytest.mark.parametrize("s", [0.2, 0.5, 0.8])
@pytest.mark.parametrize("x", [0.0, 0.7, 1.5])
def test_gaussian_matches_fourier_oracle(s, x):
    r = frac_laplacian_pv(gaussian(1), KernelParams(1, s), [x])
    assert r.value == pytest.approx(gaussian_oracle(s, x), abs=1e-7)


def test_gaussian_at_origin_closed_form():
    s = 0.35
    ref = 4 ** s * float(mp.gamma(s + 0.5)) / np.sqrt(np.pi)
    assert frac_laplacian_pv(gaussian(1), KernelParams(1, s), [0.0]).value == pytest.approx(ref, rel=1e-7)


@pytest.mark.parametrize("N", [1, 2, 3])
@pytest.mark.parametrize("s", [0.25, 0.75])
def test_torsion_function_maps_to_one(N, s):
    kp = KernelParams(N, s)
    x = np.full(N, 0.3 / np.sqrt(N))
    r = frac_laplacian_pv(torsion_field(kp), kp, x)
    assert r.value == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("s,sigma", [(0.3, 0.1), (0.3, 0.7), (0.7, 0.15)])
def test_sharmonic_family_is_annihilated(s, sigma):
    kp = KernelParams(2, s)
    x = np.array([0.5, -0.3])
    r = frac_laplacian_pv(sharmonic_field(kp, sigma), kp, x)
    assert abs(r.value) <= max(r.err_est, 1e-4 * explicit_sharmonic(kp, sigma, x))


@given(st.floats(-2, 2), st.floats(-2, 2))
def test_translation_invariance(a, b):
    kp = KernelParams(2, 0.4)
    u = gaussian(2)
    x = np.array([0.2, -0.1])
    ref = frac_laplacian_pv(u, kp, x).value
    moved = frac_laplacian_pv(u.translated([a, b]), kp, x + [a, b]).value
    assert moved == pytest.approx(ref, abs=1e-8)


@given(st.floats(-3, 3), st.floats(-3, 3))
def test_linearity(a, b):
    kp = KernelParams(1, 0.6)
    u, v = gaussian(1), torsion_field(kp)
    x = [0.25]
    lu = frac_laplacian_pv(u, kp, x).value
    lv = frac_laplacian_pv(v, kp, x).value
    w = field_sum([(a, u), (b, v)])
    assert frac_laplacian_pv(w, kp, x).value == pytest.approx(a * lu + b * lv, abs=1e-7)


def test_positive_maximum_gives_positive_value():
    # at a global maximum the operator is positive (maximum principle in pointwise form)
    for s in (0.2, 0.5, 0.9):
        assert frac_laplacian_pv(gaussian(2), KernelParams(2, s), [0.0, 0.0]).value > 0


def test_point_on_singular_sphere_rejected():
    kp = KernelParams(2, 0.5)
    with pytest.raises(DomainError):
        frac_laplacian_pv(torsion_field(kp), kp, [1.0, 0.0])


def test_checked_variant_raises_on_unreachable_tolerance():
    kp = KernelParams(2, 0.5)
    with pytest.raises(ConvergenceError) as exc:
        frac_laplacian_checked(sharmonic_field(kp, 0.25), kp, [0.9, 0.0], QuadConfig(abs_tol=1e-30, rel_tol=1e-30))
    assert np.isfinite(exc.value.value)


def test_scalar_field_declarations_are_validated():
    with pytest.raises(DomainError):
        ScalarField(lambda p: p[:, 0], "bounded")
    with pytest.raises(DomainError):
        ScalarField(lambda p: p[:, 0], "compact")
    with pytest.raises(DomainError):
        ScalarField(lambda p: p[:, 0], "wild")


def test_mean_value_property_of_sharmonic_function():
    kp = KernelParams(2, 0.5)
    u = sharmonic_field(kp, 0.25)
    res = mean_value_residual(u, kp, [0.1, 0.2], 0.3)
    assert abs(res.residual) <= max(res.bound, 1e-7)


def test_exit_average_of_torsion_defect():
    # eta_r * v = v - gamma(N,s,r) for the torsion function, on balls inside the domain
    from nonlocal_lab.kernels import gamma_radius

    kp = KernelParams(2, 0.4)
    v = torsion_field(kp)
    x, r = np.array([0.1, 0.0]), 0.4
    avg, err = exit_average(v, kp, x, r)
    vx = float(v(x[None, :])[0])
    assert avg == pytest.approx(vx - gamma_radius(2, 0.4, r), abs=max(err, 1e-7))


def test_duality_identity_for_torsion_and_sharmonic_pair():
    kp = KernelParams(1, 0.5)
    u = sharmonic_field(kp, 0.25)
    v = torsion_field(kp)
    res = duality_residual(u, v, [0.0], 1.0, kp, DualityGrid(order=8, radial_symmetry=True, tol=5e-2))
    # int_B u (-Lap)^s v = int_B u, the other terms balance it
    assert abs(res) < 5e-2


@given(st.floats(0.15, 0.85), st.floats(0.05, 1.0), st.floats(0.0, 0.85), st.floats(0, 2 * np.pi))
def test_sharmonic_family_property(s, frac, r, th):
    kp = KernelParams(2, s)
    sigma = frac * (1 - s)
    x = np.array([r * np.cos(th), r * np.sin(th)])
    res = frac_laplacian_pv(sharmonic_field(kp, sigma), kp, x)
    assert abs(res.value) <= max(res.err_est, 1e-4 * explicit_sharmonic(kp, sigma, x))
