"""Slot dynamics: clearing, profits, battery bounds, curtailment, stepping."""

import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evcoop.core import (
    ConstraintViolation,
    EssParams,
    InfeasibleIntervalError,
    PriceOrderingError,
    PriceQuote,
    StationAction,
    StationState,
    clear_trades,
    curtail_renewable,
    ess_bounds,
    profit,
    soc,
    step,
)

QUOTE = PriceQuote(utility=0.10, ev=0.12, trade=0.09, buyback=0.08)


def test_clearing_worked_example():
    # Two buyers (+10, +30) against one seller (-20): the seller is short,
    # so it is fully matched and the buyers get a 0.5 pro-rata fill.
    out = clear_trades([10.0, 30.0, -20.0])
    assert out.charge_total == pytest.approx(40.0)
    assert out.discharge_total == pytest.approx(20.0)
    assert out.matched_buy == pytest.approx([5.0, 15.0, 0.0])
    assert out.utility_buy == pytest.approx([5.0, 15.0, 0.0])
    assert out.matched_sell == pytest.approx([0.0, 0.0, 20.0])
    assert out.utility_sell == pytest.approx([0.0, 0.0, 0.0])


def test_profit_worked_example():
    out = clear_trades([10.0, 30.0, -20.0])
    br = profit([0.0, 0.0, 0.0], out, QUOTE)
    assert br.station_profit[0] == pytest.approx(-5 * 0.10 - 5 * 0.09)
    assert br.station_profit[1] == pytest.approx(-15 * 0.10 - 15 * 0.09)
    assert br.station_profit[2] == pytest.approx(20 * 0.09)
    # Net position is 20 kWh bought from the utility.
    assert br.total_profit == pytest.approx(-20 * 0.10)


def test_clearing_balanced_sides():
    out = clear_trades([15.0, -10.0, -5.0])
    assert out.matched_buy == pytest.approx([15.0, 0.0, 0.0])
    assert out.matched_sell == pytest.approx([0.0, 10.0, 5.0])
    assert sum(out.utility_buy) == pytest.approx(0.0)
    assert sum(out.utility_sell) == pytest.approx(0.0)


def test_clearing_one_sided_routes_to_utility():
    out = clear_trades([7.0, 3.0])
    assert out.utility_buy == pytest.approx([7.0, 3.0])
    assert sum(out.matched_buy) == pytest.approx(0.0)
    out = clear_trades([-4.0])
    assert out.utility_sell == pytest.approx([4.0])


def test_clearing_rejects_empty():
    with pytest.raises(ValueError):
        clear_trades([])


def test_price_ordering_enforced():
    with pytest.raises(PriceOrderingError):
        PriceQuote(utility=0.10, ev=0.12, trade=0.11, buyback=0.08)
    with pytest.raises(PriceOrderingError):
        PriceQuote(utility=0.10, ev=0.09, trade=0.09, buyback=0.08)
    with pytest.raises(PriceOrderingError):
        PriceQuote(utility=0.10, ev=0.12, trade=0.09, buyback=-0.01)


def test_ess_params_derived_bounds():
    p = EssParams()
    assert p.capacity_min == pytest.approx(10.0)
    assert p.usable_max == pytest.approx(190.0)
    assert p.export_cap == pytest.approx(2000.0)
    with pytest.raises(ValueError):
        EssParams(soc_min=0.5, soc_max=0.4)
    with pytest.raises(ValueError):
        EssParams(leakage_beta=0.0)


def test_ess_bounds_algebra():
    p = EssParams()
    lo, hi = ess_bounds(100.0, 0.0, p)
    assert lo == pytest.approx(10.0 - 99.0)
    assert hi == pytest.approx(190.0 - 99.0)
    lo, hi = ess_bounds(100.0, -50.0, p)
    assert lo == pytest.approx(-39.0)
    assert hi == pytest.approx(141.0)


def test_ess_bounds_caps_clamp():
    p = EssParams(capacity_max=100.0, export_cap=5.0, import_cap=5.0)
    lo, hi = ess_bounds(50.0, 0.0, p)
    assert lo == pytest.approx(-5.0)
    assert hi == pytest.approx(5.0)


def test_ess_bounds_empty_interval_raises():
    # Huge deficit flow with a tiny import cap: even max import cannot keep
    # the battery above its floor.
    p = EssParams(capacity_max=100.0, import_cap=5.0)
    with pytest.raises(InfeasibleIntervalError):
        ess_bounds(5.0, -500.0, p)


def test_curtailment_caps_surplus():
    p = EssParams(capacity_max=100.0, soc_min=0.05, soc_max=0.95,
                  leakage_beta=1.0, export_cap=5.0)
    flow, cut = curtail_renewable(20.0, 0.0, 95.0, p)
    assert flow == pytest.approx(5.0)
    assert cut == pytest.approx(15.0)
    # After curtailment the control interval is a single point: sell 5.
    lo, hi = ess_bounds(95.0, flow, p)
    assert lo == pytest.approx(-5.0)
    assert hi == pytest.approx(-5.0)


def test_curtailment_never_cuts_deficit():
    p = EssParams()
    flow, cut = curtail_renewable(1.0, 50.0, 100.0, p)
    assert flow == pytest.approx(-49.0)
    assert cut == 0.0
    with pytest.raises(ValueError):
        curtail_renewable(-1.0, 0.0, 100.0, p)


def test_soc_ratio():
    p = EssParams(capacity_max=200.0)
    assert soc(StationState(50.0, 0.0, 0.0), p) == pytest.approx(0.25)


def test_step_carryover_and_battery():
    p = EssParams()
    states = [StationState(battery_kwh=50.0, urgent_demand=2.0, regular_demand=8.0)]
    actions = [StationAction(ev_supply=2.0, ess_control=0.0)]
    out = step(states, actions, [0.0], QUOTE, [(1.0, 4.0)], p)
    nxt = out.next_states[0]
    # Unserved regular demand rolls into next slot's urgent bucket.
    assert nxt.urgent_demand == pytest.approx(1.0 + 8.0)
    assert nxt.regular_demand == pytest.approx(4.0)
    assert nxt.battery_kwh == pytest.approx(0.99 * 50.0 - 2.0)
    assert out.internal_flow[0] == pytest.approx(-2.0)


def test_step_rejects_undersupply_and_oversupply():
    p = EssParams()
    states = [StationState(100.0, 5.0, 5.0)]
    with pytest.raises(ConstraintViolation):
        step(states, [StationAction(1.0, 0.0)], [0.0], QUOTE, [(0.0, 0.0)], p)
    with pytest.raises(ConstraintViolation):
        step(states, [StationAction(11.0, 0.0)], [0.0], QUOTE, [(0.0, 0.0)], p)


def test_step_rejects_out_of_bounds_control():
    p = EssParams()
    states = [StationState(100.0, 0.0, 0.0)]
    with pytest.raises(ConstraintViolation):
        step(states, [StationAction(0.0, 500.0)], [0.0], QUOTE, [(0.0, 0.0)], p)


def test_step_rejects_negative_arrivals():
    p = EssParams()
    states = [StationState(100.0, 0.0, 0.0)]
    with pytest.raises(ConstraintViolation):
        step(states, [StationAction(0.0, 0.0)], [0.0], QUOTE, [(-1.0, 0.0)], p)


def test_step_length_mismatch():
    p = EssParams()
    with pytest.raises(ValueError):
        step([StationState(100.0, 0.0, 0.0)], [], [0.0], QUOTE, [(0.0, 0.0)], p)


controls = st.lists(
    st.floats(-150.0, 150.0, allow_nan=False, allow_infinity=False), min_size=1, max_size=8
)


@settings(max_examples=300, deadline=None)
@given(controls)
def test_clearing_conserves_matched_energy(cs):
    out = clear_trades(cs)
    assert sum(out.matched_buy) == pytest.approx(sum(out.matched_sell), abs=1e-9)
    # Residuals exist on at most one side of the market.
    assert min(sum(out.utility_buy), sum(out.utility_sell)) == pytest.approx(0.0, abs=1e-9)
    for i, c in enumerate(cs):
        assert out.matched_buy[i] + out.utility_buy[i] == pytest.approx(max(c, 0.0), abs=1e-9)
        assert out.matched_sell[i] + out.utility_sell[i] == pytest.approx(max(-c, 0.0), abs=1e-9)


@settings(max_examples=200, deadline=None)
@given(
    controls,
    st.floats(0.05, 2.0),
    st.floats(0.1, 0.95),
)
def test_total_profit_invariant_to_trade_price(cs, utility, trade_frac):
    supplies = [abs(c) * 0.1 for c in cs]
    out = clear_trades(cs)
    q1 = PriceQuote(utility, 1.2 * utility, 0.9 * utility, 0.8 * utility)
    trade2 = utility * (0.8 + 0.1 * trade_frac)  # anywhere in (buyback, utility)
    q2 = PriceQuote(utility, 1.2 * utility, trade2, 0.8 * utility)
    b1 = profit(supplies, out, q1)
    b2 = profit(supplies, out, q2)
    assert sum(b1.trade_net) == pytest.approx(0.0, abs=1e-9)
    scale = max(1.0, abs(b1.total_profit))
    assert abs(b1.total_profit - b2.total_profit) <= 1e-9 * scale


@settings(max_examples=200, deadline=None)
@given(
    st.floats(10.0, 190.0),
    st.floats(0.0, 40.0),
    st.floats(0.0, 30.0),
    st.floats(0.0, 1.0),
)
def test_step_keeps_battery_in_band(battery, renewable, demand, u):
    p = EssParams()
    state = StationState(battery, 0.3 * demand, 0.7 * demand)
    supply = state.urgent_demand
    flow, _ = curtail_renewable(renewable, supply, battery, p)
    lo, hi = ess_bounds(battery, flow, p)
    control = lo + u * (hi - lo)
    out = step([state], [StationAction(supply, control)], [renewable], QUOTE, [(0.0, 0.0)], p)
    nxt = out.next_states[0].battery_kwh
    assert p.capacity_min - 1e-9 <= nxt <= p.usable_max + 1e-9
