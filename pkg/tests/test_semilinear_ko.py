import numpy as np
import pytest
from hypothesis import given, strategies as st

from nonlocal_lab.errors import DomainError, KOViolationError, ResolutionError, SchemeViolationError
from nonlocal_lab.kernels import BallGeometry, KernelParams
from nonlocal_lab.rates import fit_rate
from nonlocal_lab.semilinear_ko import (NonlinearProfile, SemilinearProblem, checked_iterate,
                                        exponential_profile, ko_classify, lower_critical_profile,
                                        monotone_iterate, phi_eval, power_profile, power_range,
                                        profile_check, psi_eval, psi_table, quad_ball_operator,
                                        supersolution_value, upper_critical_profile, wos_ball_operator)
from nonlocal_lab.wos import WalkConfig

KP = KernelParams(1, 0.5)


def _open_power(p):
    """Power profile without closed forms, so phi and psi go through quadrature."""
    return NonlinearProfile(lambda t: np.asarray(t, float) ** p, lambda t: p * np.asarray(t, float) ** (p - 1),
                            m=p - 1, M=p - 1, log_f=lambda L: p * L)


@pytest.mark.parametrize("p", [1.5, 2.5, 4.0])
@pytest.mark.parametrize("u", [1e-3, 1.0, 1e4])
def test_phi_quadrature_matches_closed_form(p, u):
    assert phi_eval(_open_power(p), u) == pytest.approx(phi_eval(power_profile(p), u), rel=1e-8)


@given(v=st.floats(0.05, 20.0))
def test_psi_inverts_phi(v):
    prof = lower_critical_profile(0.5, 1.0)
    assert phi_eval(prof, psi_eval(prof, v)) == pytest.approx(v, rel=1e-9)


def test_psi_table_interpolates():
    prof = lower_critical_profile(0.5, 1.0)
    tab = psi_table(prof, n=200)
    for v in (0.1, 1.0, 5.0):
        assert tab(v) == pytest.approx(psi_eval(prof, v), rel=1e-4)


@given(c=st.floats(0.01, 1.0), v=st.floats(0.05, 5.0))
def test_psi_scaling_bound(c, v):
    prof = lower_critical_profile(0.5, 1.0)
    assert psi_eval(prof, c * v) <= c ** (-2 / prof.m) * psi_eval(prof, v) * (1 + 1e-9)


@given(v=st.floats(0.01, 10.0))
def test_psi_decreasing(v):
    prof = upper_critical_profile(0.5, 0.5)
    assert psi_eval(prof, 1.1 * v) < psi_eval(prof, v)


def test_phi_diverges_for_linear_growth():
    lin = NonlinearProfile(lambda t: t, lambda t: np.ones_like(t), m=0.0, M=0.0, log_f=lambda L: L)
    with pytest.raises(KOViolationError):
        phi_eval(lin, 1.0)


def test_phi_rejects_nonpositive():
    with pytest.raises(DomainError):
        phi_eval(power_profile(2.0), 0.0)


def test_profile_checks():
    grid = np.geomspace(1e-3, 1e6, 50)
    pc = profile_check(power_profile(2.5), grid)
    assert pc.ok and pc.m_hat == pytest.approx(1.5) and pc.M_hat == pytest.approx(1.5)
    assert profile_check(lower_critical_profile(0.5, 1.0), grid).ok
    assert not profile_check(exponential_profile(), grid).ok
    with pytest.raises(DomainError):
        profile_check(power_profile(2.5), [0.0, 1.0])
    with pytest.raises(DomainError):
        power_profile(1.0)
    with pytest.raises(DomainError):
        upper_critical_profile(0.5, 0.0)


@pytest.mark.parametrize("s", [0.25, 0.5, 0.75])
@pytest.mark.parametrize("side", [-0.2, 0.2])
def test_power_classification(s, side):
    lo, hi = 1 + 2 * s, (1 + s) / (1 - s)
    assert ko_classify(power_profile(lo + side), s).L1 is (side > 0)
    assert ko_classify(power_profile(hi + side), s).E is (side < 0)
    assert ko_classify(power_profile(1.2), s).KO is True


def test_log_critical_classification():
    s = 0.5
    assert ko_classify(lower_critical_profile(s, 1.2), s).L1 is True
    assert ko_classify(lower_critical_profile(s, 0.8), s).L1 is False
    assert ko_classify(upper_critical_profile(s, 1.2), s).E is True
    assert ko_classify(upper_critical_profile(s, 0.8), s).E is False
    c = ko_classify(exponential_profile(), s)
    assert (c.KO, c.L1, c.E) == (True, True, False)


def test_power_range_exact():
    assert power_range(0.5) == (2.0, 3.0)
    assert power_range(0.5, "spectral") == (1.5, 2.0)
    with pytest.raises(DomainError):
        power_range(0.5, "other")
    with pytest.raises(DomainError):
        power_range(1.0)


def test_supersolution_requires_l1():
    ball = BallGeometry((0.0,), 1.0)
    with pytest.raises(KOViolationError):
        supersolution_value(power_profile(1.8), 0.5, ball, [0.5])
    assert supersolution_value(power_profile(2.5), 0.5, ball, [0.5]) > 0


def test_bounded_data_quadrature_vs_monte_carlo():
    d = np.geomspace(0.5, 1e-3, 8)
    pr = SemilinearProblem(-1, power_profile(2.0), g_const=1.0)
    rq = monotone_iterate(pr, quad_ball_operator(KP, d, order=10, n_dirs=32))
    rm = monotone_iterate(pr, wos_ball_operator(KP, d, WalkConfig(n_samples=4000, seed=3)))
    assert rq.monotone and rm.monotone and rq.converged
    # centre scoring of the source carries a bias of about 1 percent at kappa = 0.5
    assert np.all(np.abs(rm.iterates[-1] - rq.iterates[-1]) <= 3 * rm.stderr[-1] + 0.02 * rq.iterates[-1])
    assert np.all((rq.iterates[-1] > 0) & (rq.iterates[-1] < 1))


def test_principal_sequence_decreases():
    d = np.geomspace(0.5, 1e-3, 8)
    pr = SemilinearProblem(-1, power_profile(2.0), g_const=1.0)
    r = checked_iterate(pr, quad_ball_operator(KP, d, order=10, n_dirs=32))
    assert np.all(np.diff(r.iterates, axis=0) <= 1e-8 * np.maximum(1, np.abs(r.iterates[1:])))
    assert np.all(r.lower <= r.iterates[1:len(r.lower) + 1] + 1e-12)


def test_ladder_monotone_and_phi_exponent():
    d = np.geomspace(0.5, 1e-8, 25)
    prof = power_profile(2.5)
    pr = SemilinearProblem(-1, prof, h_levels=[1, 2, 3, 4, 5])
    r = checked_iterate(pr, quad_ball_operator(KP, d, order=10, n_dirs=32))
    assert r.converged and r.iterates.min() > 0
    assert np.all(np.diff(r.iterates, axis=0) >= 0)
    last = r.iterates[-1]
    near = r.deltas < 1e-4
    fit = fit_rate(list(zip(r.deltas[near], [phi_eval(prof, u) for u in last[near]])), allow_log=False)
    assert fit.exponent <= KP.s + 0.05


def test_coarse_ladder_raises_resolution_error():
    pr = SemilinearProblem(-1, power_profile(2.5), h_levels=[1, 5])
    with pytest.raises(ResolutionError):
        monotone_iterate(pr, quad_ball_operator(KP, np.geomspace(0.5, 1e-2, 4), order=10, n_dirs=32))


def test_checked_iterate_raises_on_violation():
    d = np.geomspace(0.5, 1e-3, 6)
    # a decreasing source under sign + breaks the monotone upward iteration
    pr = SemilinearProblem(1, lambda u: 5.0 * np.exp(-u), lambda u: -5.0 * np.exp(-u), g_const=1.0)
    with pytest.raises(SchemeViolationError):
        checked_iterate(pr, quad_ball_operator(KP, d, order=10, n_dirs=32), k_max=5)


def test_problem_validation():
    with pytest.raises(DomainError):
        SemilinearProblem(0, power_profile(2.0))
    with pytest.raises(DomainError):
        SemilinearProblem(-1, power_profile(2.0), h_levels=[1], g_levels=[1])
