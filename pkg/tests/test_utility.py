import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from predmarket.optimize import bisect
from predmarket.utility import (LotteryFrame, censor_tests, censor_tests_exponential,
                                expected_utilities, indifference_belief, information_values,
                                inverse_theta_minus, inverse_theta_plus, theta_minus, theta_plus,
                                thresholds, u_double_relativity)

# 40-digit references from an independent arbitrary-precision evaluation
THETA_PLUS_M2_HALF = 0.2689414213699951207
THETA_MINUS_M2_HALF = 0.7310585786300048793
E_MINUS_ONE_RATIO = 3.718281828459045235
U_HALF = 1.859140914229522618
PI_STAR_Q03_LM1 = 0.2565678008109794590

lams = st.floats(-50, -1e-3)
prices = st.floats(1e-3, 1 - 1e-3)
# range where 1 - theta_minus is not lost to rounding
moderate_lams = st.floats(-20, -1e-3)
inner_prices = st.floats(0.01, 0.99)


def test_threshold_values():
    tp, tm = thresholds(-2.0, 0.5)
    assert tp == pytest.approx(THETA_PLUS_M2_HALF, abs=1e-15)
    assert tm == pytest.approx(THETA_MINUS_M2_HALF, abs=1e-15)


def test_zero_lambda_is_identity():
    assert thresholds(0.0, 0.3) == (0.3, 0.3)


def test_threshold_limit_toward_zero():
    for lam in (-1e-3, -1e-6, -1e-9):
        tp, tm = thresholds(lam, 0.3)
        assert 0 < 0.3 - tp < abs(lam)
        assert 0 < tm - 0.3 < abs(lam)


def test_price_domain():
    with pytest.raises(ValueError):
        thresholds(-1.0, 1.2)
    with pytest.raises(ValueError):
        thresholds(-1.0, 0.0)


def test_large_lambda_is_finite():
    tp, tm = thresholds(-1e6, 0.5)
    assert np.isfinite(tp) and np.isfinite(tm)
    assert 0 <= tp < 0.5 < tm <= 1


@given(lams, prices)
def test_thresholds_bracket_price(lam, q):
    tp, tm = thresholds(lam, q)
    assert tp < q < tm


@given(lams, prices)
def test_reflection_identity(lam, q):
    assert theta_minus(lam, q) == pytest.approx(1 - theta_plus(lam, 1 - q), abs=1e-12)


@given(prices)
def test_gap_grows_with_risk(q):
    lam_grid = -np.array([0.01, 0.1, 1.0, 2.0, 5.0, 20.0])
    gaps_plus = q - theta_plus(lam_grid, q)
    gaps_minus = theta_minus(lam_grid, q) - q
    assert np.all(np.diff(gaps_plus) > 0)
    assert np.all(np.diff(gaps_minus) > 0)


@given(st.floats(-20, -1e-3), prices)
def test_inverse_thresholds(lam, q):
    assert inverse_theta_plus(lam, theta_plus(lam, q)) == pytest.approx(q, abs=1e-6)
    assert inverse_theta_minus(lam, theta_minus(lam, q)) == pytest.approx(q, abs=1e-6)


def test_utility_examples():
    frame = LotteryFrame(0.0, 1.0, 0.5)
    assert u_double_relativity(0.5, -2.0, frame) == 1.0
    assert u_double_relativity(1.0, -2.0, frame) == pytest.approx(E_MINUS_ONE_RATIO, rel=1e-14)
    assert u_double_relativity(2.0, 0.0, LotteryFrame(0.0, 2.0, 1.0)) == 2.0
    with pytest.raises(ValueError):
        u_double_relativity(1.5, -2.0, frame)
    with pytest.raises(ValueError):
        LotteryFrame(0.0, 1.0, 1.0)


@given(st.floats(-30, 30))
def test_utility_increasing(lam):
    frame = LotteryFrame(-1.0, 3.0, 0.5)
    x = np.linspace(-1.0, 3.0, 41)
    assert np.all(np.diff(u_double_relativity(x, lam, frame)) > 0)


def test_expected_utility_examples():
    u_buy, u_sell = expected_utilities(0.5, 0.5, -2.0)
    assert u_buy == pytest.approx(U_HALF, rel=1e-14)
    assert u_sell == pytest.approx(U_HALF, rel=1e-14)
    tp = theta_plus(-2.0, 0.5)
    assert expected_utilities(tp, 0.5, -2.0)[0] == 1.0
    u_buy, u_sell = expected_utilities(1.0, 0.5, -2.0)
    assert u_buy == pytest.approx(E_MINUS_ONE_RATIO, rel=1e-14)
    assert u_sell == 0.0


@given(moderate_lams, inner_prices)
def test_expected_utility_monotone_and_anchored(lam, q):
    pis = np.linspace(0, 1, 21)
    u_buy, u_sell = expected_utilities(pis, q, lam)
    assert np.all(np.diff(u_buy) > 0)
    assert np.all(np.diff(u_sell) < 0)
    tp, tm = thresholds(lam, q)
    assert expected_utilities(tp, q, lam)[0] == pytest.approx(1.0, rel=1e-12)
    assert expected_utilities(tm, q, lam)[1] == pytest.approx(1.0, rel=1e-6)


def test_censor_examples():
    assert censor_tests(0.99, 0.5, -2.0) == {"BuyAdmissible": True, "SellAdmissible": False}
    assert censor_tests(0.5, 0.5, -2.0) == {"BuyAdmissible": True, "SellAdmissible": True}
    assert censor_tests(0.0, 0.3, -1.0) == {"BuyAdmissible": False, "SellAdmissible": True}


@given(st.floats(0, 1), st.floats(0.02, 0.98), st.floats(-10, -0.01))
def test_censor_matches_exponential_utility(pi, q, lam):
    tp, tm = thresholds(lam, q)
    # skip beliefs within rounding distance of a threshold
    if min(abs(pi - tp), abs(pi - tm)) < 1e-9:
        return
    assert censor_tests(pi, q, lam) == censor_tests_exponential(pi, q, lam)


def test_indifference_belief():
    assert indifference_belief(0.5, -2.0) == pytest.approx(0.5, abs=1e-15)
    assert indifference_belief(0.3, -1.0) == pytest.approx(PI_STAR_Q03_LM1, abs=1e-14)
    assert indifference_belief(0.3, -1e-8) == pytest.approx(0.3, abs=1e-7)


@given(moderate_lams, inner_prices)
def test_indifference_belief_matches_bisection(lam, q):
    tp, tm = thresholds(lam, q)
    root = bisect(lambda p: np.subtract(*expected_utilities(p, q, lam)), tp, tm, xtol=1e-14)
    pstar = indifference_belief(q, lam)
    assert tp < pstar < tm
    assert pstar == pytest.approx(root, abs=1e-10)


def test_information_values():
    phi, psi, lphi, lpsi = information_values(0.5, eta=0.25, xi=0.25)
    assert phi == 1.5 and psi == 0.5
    assert lphi == pytest.approx(math.log2(1.5)) and lphi == pytest.approx(0.585, abs=1e-3)
    assert lpsi == -1.0
    assert information_values(0.4)[:3] == (1.0, 1.0, 0.0)
    with pytest.raises(ValueError):
        information_values(0.5, eta=0.6)
    with pytest.raises(ValueError):
        information_values(0.5, xi=0.5)


@pytest.mark.parametrize("q,eta,xi", [(0.3, 0.2, 0.1), (0.6, 0.1, 0.3), (0.05, 0.5, 0.9)])
def test_utilities_decrease_to_information_values(q, eta, xi):
    phi, psi, _, _ = information_values(q, eta, xi)
    lam_seq = -np.array([8.0, 4.0, 2.0, 1.0, 0.5, 0.1, 1e-3, 1e-6])
    u_buy = np.array([expected_utilities(q + eta, q, l)[0] for l in lam_seq])
    u_sell = np.array([expected_utilities(q + xi, q, l)[1] for l in lam_seq])
    assert np.all(np.diff(u_buy) < 0) and np.all(u_buy > phi)
    assert np.all(np.diff(u_sell) < 0) and np.all(u_sell > psi)
    assert u_buy[-1] == pytest.approx(phi, rel=1e-5)
    assert u_sell[-1] == pytest.approx(psi, rel=1e-5)
