import numpy as np
import pytest
from hypothesis import given, strategies as st

from nonlocal_lab.errors import DomainError
from nonlocal_lab.kernels import KernelParams
from nonlocal_lab.rates import expected_rate, fit_rate, rate_experiment

D = np.geomspace(1e-2, 1e-5, 10)


@given(a=st.floats(-0.9, 1.5), c=st.floats(0.1, 10.0))
def test_fit_recovers_pure_power(a, c):
    fit = fit_rate(list(zip(D, c * D ** a)))
    assert fit.exponent == pytest.approx(a, abs=1e-9)
    assert fit.r2 == pytest.approx(1.0)


@given(a=st.floats(0.1, 1.0))
def test_fit_detects_log_factor(a):
    fit = fit_rate(list(zip(D, D ** a * np.log(1 / D))))
    assert fit.log_factor
    assert fit.exponent == pytest.approx(a, abs=1e-9)
    plain = fit_rate(list(zip(D, D ** a * np.log(1 / D))), allow_log=False)
    assert not plain.log_factor


def test_fit_order_independent():
    vals = D ** 0.4
    a = fit_rate(list(zip(D, vals)))
    b = fit_rate(list(zip(D[::-1], vals[::-1])))
    assert a.exponent == b.exponent
    assert a.window == (D.min(), D.max())


@pytest.mark.parametrize("samples", [
    list(zip(D[:5], D[:5])),
    list(zip(D, -D)),
    list(zip(np.linspace(0.01, 0.1, 10), np.ones(10))),
    list(zip(np.geomspace(1e-3, 2.0, 10), np.ones(10))),
])
def test_fit_rejects_bad_samples(samples):
    with pytest.raises(DomainError):
        fit_rate(samples)


def test_expected_rate_cases():
    s = 0.6
    assert expected_rate("rhs", 0.3, s) == (0.6, False)
    assert expected_rate("rhs", 0.6, s) == (0.6, True)
    assert expected_rate("rhs", 1.0, s) == (pytest.approx(0.2), False)
    assert expected_rate("datum", 0.2, s) == (-0.2, False)


@pytest.mark.parametrize("mode, beta", [("rhs", 0.0), ("rhs", 1.6), ("datum", 0.4), ("other", 0.1)])
def test_expected_rate_rejects(mode, beta):
    with pytest.raises(DomainError):
        expected_rate(mode, beta, 0.6)


@pytest.mark.parametrize("beta", [0.3, 0.6, 1.0])
def test_rhs_rates_match(beta):
    s = 0.6
    fit = rate_experiment("rhs", beta, KernelParams(1, s))
    a, lg = expected_rate("rhs", beta, s)
    assert fit.exponent == pytest.approx(a, abs=0.05)
    assert fit.log_factor == lg


def test_datum_rate_matches():
    fit = rate_experiment("datum", 0.1, KernelParams(1, 0.6))
    assert fit.exponent == pytest.approx(-0.1, abs=0.05)
    assert not fit.log_factor


def test_unknown_solver():
    with pytest.raises(DomainError):
        rate_experiment("rhs", 0.3, KernelParams(1, 0.6), solver="nope")
