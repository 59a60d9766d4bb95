import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from predmarket.flow import (FlowState, RhoLogitParams, classify_vote, rho_pair, simulate_book,
                             simulate_censored_snapshot, simulate_single_price, zero_crossings)
from predmarket.utility import expected_utilities, thresholds

REVERTING_FLOW = dict(mu=0.261, sigma=0.003, q=0.247, rho_plus=0.01, rho_minus=0.999, votes=5000)


def test_classify_outside_zone():
    assert classify_vote(0.99, 0.5, -2.0, 0, 0, 0.5, 0.5) == "B"
    assert classify_vote(0.0, 0.5, -2.0, 0, 0, 0.5, 0.5) == "S"
    assert classify_vote(0.0, 0.5, -2.0, 0, 100, 1.0, 1.0) == "S"


def test_classify_convex_comparison_oracle():
    u_buy, u_sell = expected_utilities(0.5, 0.5, -2.0)
    assert u_buy == pytest.approx(1.859140914229522618, abs=1e-12)
    buy_value = 0.01 * u_buy + 0.99
    assert buy_value == pytest.approx(1.0086, abs=1e-4)
    assert buy_value < u_sell
    assert classify_vote(0.5, 0.5, -2.0, 10.0, 0.0, 0.01, 0.999) == "S"
    # mirrored: sell side heavier, buying restores balance
    assert classify_vote(0.5, 0.5, -2.0, 0.0, 10.0, 0.999, 0.01) == "B"


def test_classify_tie_breaks_toward_balance():
    # equal values at the indifference belief with rho = 1 on both sides
    rng = np.random.default_rng(0)
    assert classify_vote(0.5, 0.5, -2.0, 0.0, 4.0, 1.0, 1.0, rng) == "B"
    assert classify_vote(0.5, 0.5, -2.0, 4.0, 0.0, 1.0, 1.0, rng) == "S"
    sides = {classify_vote(0.5, 0.5, -2.0, 0.0, 0.0, 1.0, 1.0, np.random.default_rng(s)) for s in range(20)}
    assert sides == {"B", "S"}


@given(st.floats(0, 1), st.floats(0.05, 0.95), st.floats(-5, -0.01),
       st.floats(0, 100), st.floats(0, 100), st.floats(0, 1), st.floats(0, 1))
def test_outside_zone_ignores_state(pi, q, lam, sp, sm, rp, rm):
    tp, tm = thresholds(lam, q)
    side = classify_vote(pi, q, lam, sp, sm, rp, rm)
    if pi >= tm:
        assert side == "B"
    elif pi <= tp:
        assert side == "S"


def test_rho_pair_examples():
    p = RhoLogitParams(2.0, 0.0, -3.0, -1.0)
    rp, rm = rho_pair(p, 0.5)
    assert rp == pytest.approx(0.5)
    _, rm = rho_pair(p, 0.247)
    assert rm == pytest.approx(0.5851692882587504596, abs=1e-12)
    rp, _ = rho_pair(RhoLogitParams(5.0, -1.0, -1.0, 0.0), 1 / (1 + np.e))
    assert rp == pytest.approx(0.5)


def test_rho_monotone_and_validation():
    p = RhoLogitParams(1.5, -1.1, -4.0, -0.9)
    q = np.linspace(0.01, 0.99, 50)
    rp, rm = rho_pair(p, q)
    assert np.all(np.diff(rp) > 0) and np.all(np.diff(rm) < 0)
    assert np.all((rp > 0) & (rp < 1) & (rm > 0) & (rm < 1))
    with pytest.raises(ValueError):
        RhoLogitParams(-1, 0, -1, 0)
    with pytest.raises(ValueError):
        RhoLogitParams(1, 0, 1, 0)
    assert RhoLogitParams.parse("1,2,-3,4") == RhoLogitParams(1, 2, -3, 4)
    with pytest.raises(ValueError):
        RhoLogitParams.parse("1,2")


def test_flow_state_bookkeeping():
    s = FlowState(0.25)
    for side in "BBSBS":
        s.place(side)
        assert s.v_plus == pytest.approx(0.25 * s.s_plus)
        assert s.v_minus == pytest.approx(0.75 * s.s_minus)
    assert s.votes == 5
    assert s.v_plus + s.v_minus == pytest.approx(5.0)


def test_reverting_flow_property():
    run = simulate_single_price(seed=7, **REVERTING_FLOW)
    assert run.difference.size == 5000
    assert zero_crossings(run.difference) >= 10
    assert np.max(np.abs(run.difference)) <= 0.10 * run.contracts
    np.testing.assert_allclose(run.difference[-1], run.state.s_plus - run.state.s_minus)


def test_determinism():
    a = simulate_single_price(seed=3, **REVERTING_FLOW)
    b = simulate_single_price(seed=3, **REVERTING_FLOW)
    assert np.array_equal(a.difference, b.difference)
    c = simulate_single_price(seed=4, **REVERTING_FLOW)
    assert not np.array_equal(a.difference, c.difference)
    x = simulate_book([0.25, 0.26], [300, 300], 0.255, 0.005, seed=1, rho=RhoLogitParams(2, -1, -2, -1))
    y = simulate_book([0.25, 0.26], [300, 300], 0.255, 0.005, seed=1, rho=RhoLogitParams(2, -1, -2, -1))
    assert np.array_equal(x.s_plus, y.s_plus) and np.array_equal(x.s_minus, y.s_minus)


def test_mean_reversion_against_one_sided_control():
    run = simulate_single_price(seed=11, **REVERTING_FLOW)
    control = simulate_single_price(**{**REVERTING_FLOW, "q": 0.40}, seed=11)
    assert zero_crossings(control.difference) == 0
    assert np.all(np.diff(control.difference) < 0)
    ratio = np.mean(np.abs(run.difference)) / np.mean(np.abs(control.difference))
    assert ratio < 0.01


def test_book_counts_and_zero():
    prices = [0.24, 0.25, 0.26, 0.27]
    snap = simulate_book(prices, [0, 0, 0, 0], 0.255, 0.005, seed=0)
    assert snap.total_volume == 0
    snap = simulate_book(prices, [100, 0, 50, 7], 0.255, 0.005, seed=0)
    np.testing.assert_allclose(snap.v_plus + snap.v_minus, [100, 0, 50, 7])
    with pytest.raises(ValueError):
        simulate_book(prices, [1, 2], 0.255, 0.005, seed=0)
    with pytest.raises(ValueError):
        simulate_book(prices, [1, -2, 0, 0], 0.255, 0.005, seed=0)


def test_book_far_prices_are_one_sided():
    snap = simulate_book([0.1, 0.5], [200, 200], 0.3, 0.01, seed=0, rho=RhoLogitParams(2, -1, -2, -1))
    assert snap.v_minus[0] == 0 and snap.v_plus[1] == 0


def test_censored_snapshot_counts():
    snap = simulate_censored_snapshot(0.3, 0.01, 2000, seed=0)
    assert snap.total_volume == pytest.approx(2000)
    assert snap.v_plus.sum() > 0 and snap.v_minus.sum() > 0
    same = simulate_censored_snapshot(0.3, 0.01, 2000, seed=0)
    assert np.array_equal(snap.s_plus, same.s_plus)


def test_layout_replay_is_close_to_real_volumes(data_dir):
    layout = np.genfromtxt(data_dir / "vote_layout.csv", delimiter=",", names=True)
    counts = np.floor(layout["v_plus"] + layout["v_minus"]).astype(int)
    params = json.loads((data_dir / "vote_layout_refit.json").read_text())
    assert params["label"] == "re-fitted"
    rho = RhoLogitParams(**params["rho"])
    i = int(np.argmin(np.abs(layout["q"] - 0.2597)))
    for seed in (1, 2, 3):
        snap = simulate_book(layout["q"], counts, params["mu"], params["sigma"], seed, rho)
        share = np.sum(np.abs(snap.v_plus - layout["v_plus"])) / counts.sum()
        assert share < 0.05
        assert abs(snap.v_plus[i] - 1236.4) < 0.05 * counts[i]
