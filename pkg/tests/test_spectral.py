import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, strategies as st

from nonlocal_lab import spectral as sp
from nonlocal_lab.errors import DomainError

B = sp.EigenBasis((1.0,))
PAIRS = [(0.05, 0.1), (0.3, 0.45), (0.5, 0.9), (0.2, 0.8)]


def _polylog_oracle(s, x, y):
    """Closed-form spectral sum written out separately with mpmath."""
    with mp.workdps(30):
        z1 = mp.polylog(2 * s, mp.exp(1j * mp.pi * (x - y)))
        z2 = mp.polylog(2 * s, mp.exp(1j * mp.pi * (x + y)))
        return float(mp.re(z1 - z2) / mp.pi ** (2 * s))


@pytest.mark.parametrize("s", [0.25, 0.5, 0.75])
def test_green_matches_spectral_sum(s):
    for x, y in PAIRS:
        ref = _polylog_oracle(s, x, y)
        assert sp.green_polylog(s, x, y) == pytest.approx(ref, rel=1e-12)
        assert float(sp.green_subordinate(s, x, y, B)) == pytest.approx(ref, abs=1e-6)


def test_green_polylog_classical_limit():
    for x, y in PAIRS:
        assert sp.green_polylog(1.0, x, y) == pytest.approx(float(sp.classical_green_interval(x, y)), rel=1e-12)
    assert sp.green_polylog(1.0, 0.3, 0.6) == pytest.approx(0.12)


def test_truncated_series_close_for_large_s():
    assert np.ravel(sp.green_series(0.75, 0.3, 0.6, B))[0] == pytest.approx(sp.green_polylog(0.75, 0.3, 0.6), abs=1e-3)


@given(x=st.floats(0.02, 0.98), y=st.floats(0.02, 0.98), s=st.floats(0.2, 0.9))
def test_green_symmetric_positive(x, y, s):
    if abs(x - y) < 1e-3:
        return
    a = float(sp.green_subordinate(s, x, y, B))
    b = float(sp.green_subordinate(s, y, x, B))
    assert a > 0
    assert a == pytest.approx(b, rel=1e-10)


def test_green_polylog_domain():
    for args in [(0.5, 0.3, 0.3), (0.5, 0.0, 0.3), (0.5, 0.3, 1.2), (0.0, 0.3, 0.6), (1.2, 0.3, 0.6)]:
        with pytest.raises(DomainError):
            sp.green_polylog(*args)


def test_poisson_classical_limit():
    assert float(sp.spectral_poisson(0.3, 0.0, 1.0, B)) == pytest.approx(0.7, abs=1e-8)
    assert float(sp.spectral_poisson(0.3, 1.0, 1.0, B)) == pytest.approx(0.3, abs=1e-8)


def test_compositions():
    assert sp.compose_green(0.5, 0.5, 0.3, 0.6, B) == pytest.approx(0.12, abs=1e-5)
    assert sp.compose_green(0.25, 0.5, 0.3, 0.6, B) == pytest.approx(sp.green_polylog(0.75, 0.3, 0.6), abs=1e-5)
    assert sp.compose_green_poisson(0.5, 0.3, B) == pytest.approx(0.7, abs=1e-5)


@pytest.mark.parametrize("s", [0.25, 0.5, 0.75])
def test_h1_slope(s):
    d = np.geomspace(1e-6, 1e-3, 7)
    slope = np.polyfit(np.log(d), np.log(sp.h1_weight(d, s, B)), 1)[0]
    assert slope == pytest.approx(-(2 - 2 * s), abs=0.05)


@pytest.mark.parametrize("s", [0.3, 0.5, 0.8])
def test_killing_rate_bracket(s):
    d = np.geomspace(0.01, 0.2, 6)
    scaled = np.atleast_1d(sp.killing(s, d, B)) * d ** (2 * s)
    c = sp.half_line_killing_constant(s)
    assert np.all((scaled > c / 2) & (scaled < 2 * c))


def test_eigenfunction_is_eigenvector():
    s, x = 0.4, np.array([0.2, 0.5])
    c = sp.coefficients(lambda y: np.sqrt(2) * np.sin(np.pi * y), B)
    assert c[0] == pytest.approx(1.0, abs=1e-12)
    assert np.max(np.abs(c[1:])) < 1e-12
    r = sp.spectral_apply(c[:5], s, B, x)
    assert np.allclose(r.value, np.pi ** (2 * s) * np.sqrt(2) * np.sin(np.pi * x), atol=1e-10)


@pytest.mark.parametrize("s", [0.3, 0.7])
def test_pv_form_agrees_with_eigen_form(s):
    x = 0.35
    val = sp.spectral_apply_pv(lambda y: np.sin(np.pi * y), s, x)
    assert val == pytest.approx(np.pi ** (2 * s) * np.sin(np.pi * x), rel=1e-5)


def test_solve_inverts_operator():
    s, x = 0.5, 0.3
    lam = np.pi ** 2
    u = sp.spectral_solve(lambda y: lam ** s * np.sin(np.pi * y), None, x, s, B)
    assert u == pytest.approx(np.sin(np.pi * x), rel=1e-6)
    # positive boundary data alone give a positive solution
    assert sp.spectral_solve(None, (1.0, 1.0), x, s, B) > 0


def test_spectral_range_rejects_endpoint():
    assert sp.spectral_range(0.5) == (1.5, 2.0)
    with pytest.raises(DomainError):
        sp.large_solution_spectral(2.0, 0.5, B)


def test_basis_validation():
    with pytest.raises(DomainError):
        sp.EigenBasis((1.0, 1.0, 1.0))
    with pytest.raises(DomainError):
        sp.EigenBasis((-1.0,))
    with pytest.raises(DomainError):
        sp.EigenBasis((1.0,), J=0)
