import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import erfc

from aearb.bounds import (
    STATUS_ANY_C2,
    STATUS_ESTIMATED,
    STATUS_INCONCLUSIVE,
    STATUS_UPPER_BOUND,
    alpha_limit,
    bound_constants,
    cascade_params,
    certificate_constants,
    check_eps_arbitrage_condition,
    estimate_ldp_rate,
    find_gamma3_Ttilde,
    gaussian_tail_bound,
    horizon_grid,
    scaling_condition,
    small_eps1_condition,
)
from aearb.errors import ConfigurationError, DomainError, HorizonTooSmallError, SearchExhaustedError


def exact_tail(x):
    return 0.5 * erfc(x / math.sqrt(2))


@pytest.fixture
def k1():
    return bound_constants(1.0, 1.0, 0.25)


def test_constants_reference_values(k1):
    assert k1.gamma1 == pytest.approx(0.03125, abs=5e-7)
    assert k1.gamma2 == 0.25
    assert round(k1.C_tilde, 6) == 2.595769
    k2 = bound_constants(2.0, 0.5, 0.5)
    assert k2.gamma1 == pytest.approx(0.0625)
    assert k2.gamma2 == 0.5
    assert round(k2.C_tilde, 6) == 2.128379


def test_T0_is_smallest_integer_below_one(k1):
    assert k1.C_tilde * math.exp(-k1.gamma1 * k1.T0) < 1
    assert k1.C_tilde * math.exp(-k1.gamma1 * (k1.T0 - 1)) >= 1
    assert k1.T0 == 31


def test_c2_branch_binds():
    assert bound_constants(1.0, 0.01, 0.25).gamma1 == pytest.approx(0.005)


@pytest.mark.parametrize("delta", [0.0, 0.5, 0.6, -0.1])
def test_delta_domain(delta):
    with pytest.raises(DomainError, match="δ < c₁/2"):
        bound_constants(1.0, 1.0, delta)


@settings(max_examples=60, deadline=None)
@given(c1=st.floats(0.01, 10), c2=st.floats(0.01, 10), frac=st.floats(0.01, 0.99))
def test_constant_invariants(c1, c2, frac):
    k = bound_constants(c1, c2, frac * c1 / 2, cap=10**9)
    assert k.gamma1 > 0 and k.gamma2 > 0 and k.C_tilde > 1
    assert k.C_tilde * math.exp(-k.gamma1 * k.T0) < 1
    assert bound_constants(c1, 2 * c2, frac * c1 / 2, cap=10**9).gamma1 >= k.gamma1


def test_C_tilde_blows_up_near_half_c1():
    near = bound_constants(1.0, 1.0, 0.499 * 0.5)
    far = bound_constants(1.0, 1.0, 0.25 * 0.5)
    assert near.C_tilde > far.C_tilde
    assert near.gamma1 < far.gamma1


def test_tail_bound_reference_values():
    assert gaussian_tail_bound(1, 1) == pytest.approx(0.241971, abs=5e-7)
    assert gaussian_tail_bound(2, 1) == pytest.approx(0.026996, abs=1e-6)
    assert gaussian_tail_bound(1, 2) == pytest.approx(0.053991, abs=5e-7)


@pytest.mark.parametrize("a", [0.1, 0.5, 1, 2, 5])
@pytest.mark.parametrize("b", [1, 1.5, 2, 3, 5])
def test_tail_bound_dominates(a, b):
    assert gaussian_tail_bound(a, b) >= exact_tail(a * b)


@pytest.mark.parametrize("a,b", [(0, 1), (-1, 2), (1, 0.99)])
def test_tail_bound_domain(a, b):
    with pytest.raises(DomainError):
        gaussian_tail_bound(a, b)


def test_cascade_reference_values(k1):
    p400 = cascade_params(k1, 400)
    assert p400.alpha == pytest.approx(0.11546125, abs=1e-6)
    assert p400.eps1 == pytest.approx(9.67352e-6, rel=1e-5)
    assert p400.eps1_tilde == pytest.approx(0.006783, abs=5e-7)
    p200 = cascade_params(k1, 200)
    assert p200.alpha == pytest.approx(0.1059225, abs=1e-6)
    assert p200.alpha < p400.alpha < alpha_limit(k1)
    assert p400.gamma3 == 0.03125 and p400.gamma4 == pytest.approx(0.015625)


def test_eps_identity_and_monotone_alpha(k1):
    alphas = []
    for T in [40, 81, 100, 200, 400, 800, 5000]:
        p = cascade_params(k1, T)
        assert p.eps1 == pytest.approx(p.eps2**p.alpha, rel=1e-12)
        alphas.append(p.alpha)
    assert all(b > a for a, b in zip(alphas, alphas[1:]))
    assert alphas[-1] < alpha_limit(k1)


def test_alpha_gap_closes_at_rate_logC_over_gamma2_T(k1):
    T = 1e3 * k1.log_C_tilde / k1.gamma2 * 1.01
    p = cascade_params(k1, T)
    assert 0 < alpha_limit(k1) - p.alpha < 1e-3
    assert alpha_limit(k1) - p.alpha == pytest.approx(k1.log_C_tilde / (k1.gamma2 * T), rel=1e-9)


def test_cascade_errors(k1):
    with pytest.raises(HorizonTooSmallError):
        cascade_params(k1, 10)
    with pytest.raises(DomainError):
        cascade_params(k1, 100, gamma3=k1.gamma2 / 2)


def test_eps_condition_examples():
    assert check_eps_arbitrage_condition(0.01, 0.01, 0.3, 0.3, 1)
    assert not check_eps_arbitrage_condition(0.01, 0.01, 0.1, 0.1, 1)
    # equality on the boundary counts as true
    eps = 0.25 * 0.5 / 4
    assert check_eps_arbitrage_condition(eps, eps, 0.5, 0.5, 1.0)
    with pytest.raises(DomainError):
        check_eps_arbitrage_condition(0.0, 0.1, 0.5, 0.5, 1)
    with pytest.raises(DomainError):
        check_eps_arbitrage_condition(0.1, 0.1, 0.5, 0.5, 0)


def test_Ttilde_reference_and_replay(k1):
    gamma3, T_tilde = find_gamma3_Ttilde(k1)
    assert gamma3 == 0.03125 and T_tilde == 81
    assert scaling_condition(k1.gamma2, gamma3, T_tilde)
    assert small_eps1_condition(k1, T_tilde)
    assert not small_eps1_condition(k1, 80)
    for T in horizon_grid(T_tilde, 50):
        p = cascade_params(k1, T)
        assert p.beyond_T_tilde
        assert check_eps_arbitrage_condition(p.eps1, p.eps2, p.eps1_tilde, p.eps2_tilde, p.alpha)


def test_Ttilde_with_tiny_gamma1():
    k = bound_constants(0.25, 1.0, 0.1)
    assert k.gamma1 == pytest.approx(0.00125)
    _, T_tilde = find_gamma3_Ttilde(k)
    assert 1000 < T_tilde < 10_000
    with pytest.raises(SearchExhaustedError):
        find_gamma3_Ttilde(k, cap=2000)


def test_certificate_constants_match_cascade(k1):
    g3, g4, C = certificate_constants(k1)
    p = cascade_params(k1, 100)
    assert (g3, g4, C) == (p.gamma3, p.gamma4, p.C)


def tail_samples(rate, horizons, n=20000, c1=0.1):
    out = {}
    for T in horizons:
        k = int(round(n * math.exp(-rate * T)))
        x = np.full(n, 2 * c1 * T)
        x[:k] = 0.5 * c1 * T
        out[T] = x
    return out


def test_ldp_rate_recovered_from_exponential_tail():
    est = estimate_ldp_rate(tail_samples(0.1, [10, 20, 30, 40]), 0.1)
    assert est.status == STATUS_ESTIMATED
    assert est.rate_estimate == pytest.approx(-0.1, abs=2e-3)
    assert est.decays and est.supports_rate(0.09) and not est.supports_rate(0.11)
    assert all(v <= 0 for v in est.log_probs)


def test_ldp_zero_counts_use_rule_of_three():
    est = estimate_ldp_rate(tail_samples(0.5, [5, 10, 40], n=2000), 0.1)
    assert est.flagged == (False, False, True)
    assert est.log_probs[2] is None
    assert est.upper_bounds[2] == pytest.approx(math.log(3 / 2000) / 40)
    assert est.status == STATUS_UPPER_BOUND
    assert est.rate_estimate < 0


def test_ldp_constant_phi_flags_everything():
    samples = {T: np.full(1000, 0.36 * T) for T in (10, 20, 40)}
    est = estimate_ldp_rate(samples, 0.25)
    assert all(est.flagged)
    assert est.status == STATUS_ANY_C2
    no_bound = estimate_ldp_rate(samples, 0.25, use_bound=False)
    assert no_bound.status == STATUS_INCONCLUSIVE and no_bound.rate_estimate is None


def test_ldp_mass_below_threshold_gives_zero_rate():
    samples = {T: np.full(1000, 0.05 * T) for T in (10, 20, 40)}
    est = estimate_ldp_rate(samples, 0.1)
    assert est.p_hat == (1.0, 1.0, 1.0)
    assert est.rate_estimate == 0 and not est.decays


def test_ldp_input_checks():
    with pytest.raises(ConfigurationError):
        estimate_ldp_rate({10: np.zeros(1000), 20: np.zeros(1000)}, 0.1)
    with pytest.raises(ConfigurationError):
        estimate_ldp_rate({10: np.zeros(10), 20: np.zeros(1000), 30: np.zeros(1000)}, 0.1)


def test_T0_respects_observed_tail():
    est = estimate_ldp_rate(tail_samples(0.01, [20, 40, 60]), 0.1)
    k = bound_constants(1.0, 1.0, 0.25, ldp=est)
    # p_hat ~ exp(-0.01 T) exceeds exp(-c2 T / 2) at every observed horizon
    assert k.T0 == 61
