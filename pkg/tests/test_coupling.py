from dataclasses import replace

import pytest
from hypothesis import given, strategies as st

from coupledmarkets.cli import table_iv_rows
from coupledmarkets.coupling import (
    CouplingMap,
    FleetBid,
    GpaState,
    evaluate_fleet_profit,
    gas_rate_to_power,
    gpa_iterate,
    pattern_search_bids,
    power_to_gas_rate,
)
from coupledmarkets.errors import NegativePower
from coupledmarkets.monitor import conduct_test


def test_conversion_examples():
    assert power_to_gas_rate(0.0) == 0.0
    assert power_to_gas_rate(100.0) == pytest.approx(3.747, abs=5e-4)
    assert gas_rate_to_power(power_to_gas_rate(57.3)) == pytest.approx(57.3, rel=1e-12)
    with pytest.raises(NegativePower):
        power_to_gas_rate(-1.0)
    with pytest.raises(NegativePower):
        gas_rate_to_power(-1.0)


@given(st.floats(0.0, 1e5))
def test_conversion_round_trip(p):
    assert abs(gas_rate_to_power(power_to_gas_rate(p)) - p) <= 1e-12 * max(1.0, p)


def test_coupling_map_rules():
    with pytest.raises(ValueError):
        CouplingMap((("g1", "d1"), ("g1", "d2")))
    with pytest.raises(ValueError):
        CouplingMap((("g1", "d1"),), heat_rate=0.0)
    assert CouplingMap((("g1", "d1"),)).mass_to_money == pytest.approx(200.16)


@pytest.fixture(scope="module")
def case(coupled):
    return coupled.coupled_case()


@pytest.fixture(scope="module")
def table_iv(case):
    return table_iv_rows(case)


def test_table_iv_sign_pattern_and_ordering(table_iv):
    normal, collusion, raised = (ev.profit for ev in table_iv)
    assert normal < 0 < collusion < raised


def test_collusion_curtails_delivery_two(table_iv):
    normal, collusion, raised = table_iv
    assert normal.gas["g2"] == pytest.approx(19.0, abs=1e-3)
    assert collusion.gas["g2"] == pytest.approx(14.0, abs=1e-3)
    assert collusion.bus_lmp[2] > normal.bus_lmp[2]
    assert raised.bus_lmp[2] == pytest.approx(150.0, abs=5e-3)
    assert raised.conduct_ok and raised.impact_ok


def test_unused_gas_is_still_paid_for(case, table_iv):
    collusion = table_iv[1]
    burned = power_to_gas_rate(collusion.power["g1"])
    assert collusion.gas["g1"] > burned
    conv = case.coupling.mass_to_money
    expected = collusion.lmp["g1"] * collusion.power["g1"] - collusion.gas_price["g1"] * collusion.gas["g1"] * conv
    assert collusion.profit_by_gen["g1"] == pytest.approx(expected)


def test_bid_above_cap_is_rejected(case):
    bids = {"g1": FleetBid(120.0, 700.0, 3.5, 19.0)}
    ev = evaluate_fleet_profit(case, bids)
    assert not ev.conduct_ok
    assert ev.score == float("-inf")


@pytest.fixture(scope="module")
def uncongested(case):
    return replace(case, power=case.power.with_all_line_limits(1e4).with_demand(1, 500.0).with_demand(2, 200.0))


def test_uncongested_fixed_point(uncongested):
    start = GpaState(0, {"g1": FleetBid(40.0, 700.0, 3.5, 19.0), "g2": FleetBid(30.0, 700.0, 3.5, 19.0)})
    first = gpa_iterate(start, uncongested)
    second = gpa_iterate(first, uncongested)
    assert first.accepted
    assert second.bids == first.bids
    assert second.profit == first.profit
    for g in first.bids:
        assert first.bids[g].power_max == start.bids[g].power_max
        assert abs(first.bids[g].gas_max - power_to_gas_rate(first.power[g])) <= 1e-9


def test_shortfall_shrinks_and_raises(uncongested):
    # a $20 offer implies a fuel bid below the supply price, so no gas clears
    start = GpaState(0, {"g1": FleetBid(40.0, 700.0, 3.5, 19.0), "g2": FleetBid(20.0, 700.0, 3.5, 19.0)})
    nxt = gpa_iterate(start, uncongested)
    assert nxt.gas["g2"] < power_to_gas_rate(nxt.power["g2"])
    assert nxt.bids["g2"].power_max < start.bids["g2"].power_max
    assert nxt.bids["g2"].power_price > start.bids["g2"].power_price


def test_accepted_iterates_do_not_lose_profit(case):
    state = GpaState(0, {"g1": FleetBid(26.25, 700.0, 3.6, 26.0), "g2": FleetBid(26.25, 700.0, 3.5, 19.0)})
    accepted = []
    for _ in range(5):
        state = gpa_iterate(state, case)
        if state.accepted:
            accepted.append(state.profit)
    assert len(accepted) >= 2
    assert all(b >= a - 1e-6 for a, b in zip(accepted, accepted[1:]))


def _start(coupled, label):
    return GpaState(0, coupled.starts()[label])


def test_zero_budget_returns_initial(coupled, case):
    init = _start(coupled, "A")
    assert pattern_search_bids(init, case, 0) is init


def test_pattern_search_deterministic_and_monotone(coupled, case):
    runs = [pattern_search_bids(_start(coupled, "A"), case, 60) for _ in range(2)]
    assert runs[0].bids == runs[1].bids
    assert runs[0].trace == runs[1].trace
    scores = [s for _, s in runs[0].trace]
    assert all(b >= a for a, b in zip(scores, scores[1:]))
    out = runs[0]
    assert out.profit >= evaluate_fleet_profit(case, _start(coupled, "A").bids).score
    for g, b in out.bids.items():
        ref = case.power.generator(g).reference_cost
        assert conduct_test(b.power_price, ref, case.monitor).passed
    assert out.conduct_ok and out.impact_ok
