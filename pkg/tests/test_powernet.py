import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import linprog

from coupledmarkets.errors import DisconnectedNetwork, InfeasibleDispatch, InvalidNetwork
from coupledmarkets.powernet import (
    Bid,
    Bus,
    Generator,
    Line,
    PowerBidSet,
    PowerNetwork,
    build_opf,
    bus_ptdf,
    clear_market,
    compute_gsf,
    lmp_decomposition,
)


def two_bus(demand=10.0):
    return PowerNetwork([Bus(1, 0.0), Bus(2, demand)], [Line(1, 2, 0.1, 100.0)],
                        [Generator("g", 1, 0.0, 50.0, 20.0)])


def test_two_bus_structure():
    lp = build_opf(two_bus())
    assert lp.n == 3
    assert len(lp.equality_rows) == 2


def test_three_bus_structure(three_bus):
    lp = build_opf(three_bus.power_network(), three_bus.power_bids())
    assert lp.n == 6
    assert len(lp.equality_rows) == 3
    assert len([r for r in lp.inequality_rows if r.name.startswith("line")]) == 6
    assert len([r for r in lp.inequality_rows if r.name.startswith("gen")]) == 6


def test_supply_shortage_is_infeasible():
    with pytest.raises(InfeasibleDispatch) as exc:
        clear_market(two_bus(demand=80.0))
    assert exc.value.certificate is not None


def test_uncongested_uniform_price():
    res = clear_market(two_bus())
    assert res.lmp == {1: pytest.approx(20.0), 2: pytest.approx(20.0)}
    assert not res.binding_lines


def test_invalid_networks():
    with pytest.raises(InvalidNetwork):
        PowerNetwork([Bus(1, -1.0)], [], []).validate()
    with pytest.raises(InvalidNetwork):
        PowerNetwork([Bus(1), Bus(2)], [Line(1, 2, 0.0, 10.0)], []).validate()
    with pytest.raises(DisconnectedNetwork):
        clear_market(PowerNetwork([Bus(1), Bus(2, 5.0)], [], [Generator("g", 1, 0, 10, 1)]))


@pytest.mark.parametrize("change, expected", [
    ("limits30", (20, 20, 20)),
    ("row5", (30, -10, 10)),
])
def test_table_rows(three_bus, change, expected):
    net, bids = three_bus.power_network(), three_bus.power_bids()
    if change == "limits30":
        net = net.with_all_line_limits(30.0)
    else:
        net = net.with_line_limit(net.line_index(1, 2), 10.0).with_demand(2, 5.0)
    res = clear_market(net, bids)
    assert [round(res.lmp[b], 2) for b in (1, 2, 3)] == list(expected)


def test_gsf():
    gsf = compute_gsf(two_bus())
    assert gsf.shape == (1, 1)
    assert gsf[0, 0] == 0.0  # generator sits at the slack bus
    net = PowerNetwork([Bus(1), Bus(2, 5.0)], [Line(1, 2, 0.1, 10)], [Generator("g", 2, 0, 10, 1)])
    assert abs(compute_gsf(net)[0, 0]) == pytest.approx(1.0)


def test_gsf_triangle(three_bus):
    net = three_bus.power_network()
    gsf = compute_gsf(net)
    assert np.all(gsf[0] == 0.0)  # g1 at the slack bus
    for v in gsf[1:].ravel():
        assert min(abs(abs(v) - 1 / 3), abs(abs(v) - 2 / 3)) < 1e-12


def test_lmp_decomposition(three_bus):
    net, bids = three_bus.power_network(), three_bus.power_bids()
    res = clear_market(net.with_all_line_limits(30.0), bids)
    for energy, congestion in lmp_decomposition(res, net).values():
        assert congestion == pytest.approx(0.0, abs=1e-9)
    net5 = net.with_line_limit(net.line_index(1, 2), 10.0).with_demand(2, 5.0)
    res = clear_market(net5, bids)
    parts = lmp_decomposition(res, net5)
    for b, (energy, congestion) in parts.items():
        assert energy + congestion == res.lmp[b]
        assert energy == res.lmp[net5.slack]
    single = PowerNetwork([Bus(1, 5.0)], [], [Generator("g", 1, 0, 10, 7.0)])
    r = clear_market(single)
    assert lmp_decomposition(r, single) == {1: (pytest.approx(7.0), 0.0)}


# ---------------------------------------------------------------------------
# random networks


@st.composite
def networks(draw):
    rng = np.random.default_rng(draw(st.integers(0, 2**32 - 1)))
    n = int(rng.integers(2, 7))
    buses = [Bus(b, float(rng.integers(0, 40))) for b in range(1, n + 1)]
    edges = {(b, int(rng.integers(1, b))) for b in range(2, n + 1)}  # spanning tree
    for _ in range(int(rng.integers(0, n))):
        a, b = sorted(rng.choice(np.arange(1, n + 1), 2, replace=False).tolist())
        edges.add((b, a))
    lines = [Line(a, b, float(rng.uniform(0.05, 0.5)), float(rng.integers(5, 80))) for a, b in sorted(edges)]
    total = sum(b.demand for b in buses)
    gens = []
    for k in range(int(rng.integers(1, 5))):
        gens.append(Generator(f"g{k}", int(rng.integers(1, n + 1)), 0.0, float(rng.integers(10, 80)),
                              float(rng.integers(1, 60))))
    gens.append(Generator("backstop", 1, 0.0, total + 1.0, 500.0))
    return PowerNetwork(buses, lines, gens)


def _ptdf_oracle(net):
    """Independent PTDF-form OPF solved by HiGHS; returns the optimal cost or None."""
    ptdf = bus_ptdf(net)
    ids = net.bus_ids
    G = len(net.generators)
    c = np.array([g.reference_cost for g in net.generators])
    inj = np.zeros((len(ids), G))
    for k, g in enumerate(net.generators):
        inj[ids.index(g.bus), k] = 1.0
    d = np.array([b.demand for b in net.buses])
    A_ub = np.vstack([ptdf @ inj, -(ptdf @ inj)])
    lim = np.array([l.limit for l in net.lines])
    b_ub = np.concatenate([lim + ptdf @ d, lim - ptdf @ d])
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=np.ones((1, G)), b_eq=[d.sum()],
                  bounds=[(g.pmin, g.pmax) for g in net.generators], method="highs")
    return res.fun if res.status == 0 else None


@settings(max_examples=200, deadline=None)
@given(networks())
def test_random_network_laws(net):
    bids = PowerBidSet.reference(net)
    ref = _ptdf_oracle(net)
    try:
        res = clear_market(net, bids)
    except InfeasibleDispatch:
        assert ref is None
        return
    assert res.objective == pytest.approx(ref, rel=1e-7, abs=1e-6)
    # balance and limits
    for b in net.buses:
        gen = sum(res.generation[g.id] for g in net.generators if g.bus == b.id)
        out = sum(res.flow[k] for k, l in enumerate(net.lines) if l.from_bus == b.id)
        inn = sum(res.flow[k] for k, l in enumerate(net.lines) if l.to_bus == b.id)
        assert abs(gen - b.demand - out + inn) <= 1e-6
    for k, l in enumerate(net.lines):
        assert abs(res.flow[k]) <= l.limit + 1e-6
    # uniform-price law
    if not res.binding_lines:
        vals = list(res.lmp.values())
        assert max(vals) - min(vals) <= 1e-6
    # marginal-generator law
    for g in net.generators:
        p = res.generation[g.id]
        if g.pmin + 1e-6 < p < g.pmax - 1e-6:
            assert res.lmp[g.bus] == pytest.approx(bids.price(g), abs=1e-6)
    # revenue adequacy
    rent = sum(res.lmp[b.id] * b.demand for b in net.buses) - sum(
        res.lmp[g.bus] * res.generation[g.id] for g in net.generators)
    assert rent >= -1e-6
    # LMP lies between the left and right marginal cost of demand (equal unless degenerate)
    b = net.bus_ids[-1]
    if net.demand(b) >= 1e-3:
        try:
            up = clear_market(net.add_demand(b, 1e-3), bids).objective
        except InfeasibleDispatch:
            up = math.inf
        down = clear_market(net.add_demand(b, -1e-3), bids).objective
        left, right = (res.objective - down) / 1e-3, (up - res.objective) / 1e-3
        assert left - 1e-4 <= res.lmp[b] <= right + 1e-4


@settings(max_examples=50, deadline=None)
@given(networks(), st.sampled_from([0.5, 2.0, 7.0]))
def test_scaling_invariance(net, k):
    bids = PowerBidSet.reference(net)
    scaled = PowerBidSet({g: Bid(b.price * k) for g, b in bids.items()})
    try:
        a = clear_market(net, bids)
    except InfeasibleDispatch:
        return
    b = clear_market(net, scaled)
    for g in net.generators:
        assert b.generation[g.id] == pytest.approx(a.generation[g.id], abs=1e-8)
