"""Gas-electric coupling: heat-rate conversions, fleet profit, the iterative bidding
loop and a pattern search over price-quantity bids in both markets."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple

from . import gasnet
from .errors import ClearingFailed, InfeasibleDispatch, MarketError, NegativePower
from .gasnet import GasMarket, GasNetwork, clear_gas_market
from .monitor import MonitorConfig, run_monitor
from .powernet import Bid, PowerBidSet, PowerNetwork, clear_market

HEAT_RATE = 7.5  # MMBtu/MWh
ENERGY_DENSITY = gasnet.ENERGY_DENSITY  # MMBtu/kg
SECONDS_PER_HOUR = 3600.0


@dataclass(frozen=True)
class CouplingMap:
    links: Tuple[Tuple[str, str], ...]  # (generator id, gas demand participant id)
    heat_rate: float = HEAT_RATE
    energy_density: float = ENERGY_DENSITY

    def __post_init__(self):
        object.__setattr__(self, "links", tuple(tuple(l) for l in self.links))
        if self.heat_rate <= 0 or self.energy_density <= 0:
            raise ValueError("conversion constants must be positive")
        gens = [g for g, _ in self.links]
        if len(set(gens)) != len(gens):
            raise ValueError("each generator must be linked to exactly one gas participant")

    def participant(self, gid):
        for g, m in self.links:
            if g == gid:
                return m
        raise KeyError(gid)

    @property
    def generators(self):
        return [g for g, _ in self.links]

    @property
    def mass_to_money(self):
        """Factor turning ($/MMBtu) * (kg/s) into $/h."""
        return self.energy_density * SECONDS_PER_HOUR


def power_to_gas_rate(power_mw, heat_rate=HEAT_RATE, energy_density=ENERGY_DENSITY):
    """MW of output -> kg/s of fuel."""
    if power_mw < 0:
        raise NegativePower(f"power must be nonnegative, got {power_mw}")
    return power_mw * heat_rate / energy_density / SECONDS_PER_HOUR


def gas_rate_to_power(rate_kg_s, heat_rate=HEAT_RATE, energy_density=ENERGY_DENSITY):
    if rate_kg_s < 0:
        raise NegativePower(f"gas rate must be nonnegative, got {rate_kg_s}")
    return rate_kg_s * energy_density * SECONDS_PER_HOUR / heat_rate


@dataclass(frozen=True)
class FleetBid:
    power_price: float  # $/MWh
    power_max: float  # MW
    gas_price: float  # $/MMBtu
    gas_max: float  # kg/s

    def as_tuple(self):
        return (self.power_price, self.power_max, self.gas_price, self.gas_max)


@dataclass(frozen=True)
class CoupledCase:
    """Everything the fleet cannot see: networks, other participants' bids, the monitor."""

    power: PowerNetwork
    power_bids: PowerBidSet
    gas: GasNetwork
    gas_market: GasMarket
    coupling: CouplingMap
    monitor: MonitorConfig = MonitorConfig()
    price_cap: float = 100.0  # $/MWh upper bound on fleet electric bids


@dataclass
class Evaluation:
    bids: Dict[str, FleetBid]
    lmp: Dict[str, float] = field(default_factory=dict)
    power: Dict[str, float] = field(default_factory=dict)
    gas_price: Dict[str, float] = field(default_factory=dict)  # $/MMBtu
    gas: Dict[str, float] = field(default_factory=dict)  # kg/s
    profit_by_gen: Dict[str, float] = field(default_factory=dict)
    bus_lmp: Dict[int, float] = field(default_factory=dict)
    conduct_ok: bool = True
    impact_ok: bool = True
    error: Optional[str] = None

    @property
    def profit(self):
        return sum(self.profit_by_gen.values())

    @property
    def feasible(self):
        return self.error is None and self.conduct_ok and self.impact_ok

    @property
    def score(self):
        return self.profit if self.feasible else -math.inf


def _gas_market_with(case: CoupledCase, bids):
    market = case.gas_market
    for gid, b in bids.items():
        market = market.with_bid(case.coupling.participant(gid), price=b.gas_price * case.coupling.energy_density,
                                 max_quantity=b.gas_max)
    return market


def _power_bids_with(case: CoupledCase, bids, capacity=None):
    out = PowerBidSet(case.power_bids)
    # units outside the fleet still burn only the gas they cleared
    for gid, cap in (capacity or {}).items():
        if gid not in bids:
            hi = out.limits(case.power.generator(gid))[1]
            out[gid] = replace(out[gid], pmax=min(hi, cap))
    for gid, b in bids.items():
        pmax = b.power_max if capacity is None else min(b.power_max, capacity[gid])
        pmax = min(max(pmax, 0.0), case.power.generator(gid).pmax)
        out[gid] = Bid(b.power_price, pmax=pmax)
    return out


def fleet_profit(case: CoupledCase, lmp, power, gas_price, gas):
    """Electric revenue minus gas bought, in $/h; unused gas is still paid for."""
    conv = case.coupling.mass_to_money
    return {g: lmp[g] * power[g] - gas_price[g] * gas[g] * conv for g in power}


def _monitor_flags(case, bids, power_bids, fleet):
    report = run_monitor(case.power, power_bids, case.monitor)
    conduct = all(report.records[g].conduct.passed for g in fleet)
    impact = not any(report.records[g].mitigated or g in report.owner_cascade for g in fleet)
    conduct = conduct and all(bids[g].power_price <= case.price_cap + 1e-9 for g in fleet)
    return conduct, impact


def evaluate_fleet_profit(case: CoupledCase, bids: Dict[str, FleetBid], check_monitor=True) -> Evaluation:
    """Clear gas with the fleet's gas bids, then power with offered capacity capped by the gas won."""
    ev = Evaluation(dict(bids))
    cm = case.coupling
    try:
        gclear = clear_gas_market(case.gas, _gas_market_with(case, bids))
    except MarketError as exc:
        ev.error = f"gas clearing failed: {exc}"
        return ev
    capacity = {}
    for gid in cm.generators:
        pid = cm.participant(gid)
        capacity[gid] = gas_rate_to_power(max(gclear.quantity[pid], 0.0), cm.heat_rate, cm.energy_density)
        if gid in bids:
            node = case.gas_market.participant(pid).node
            ev.gas[gid] = gclear.quantity[pid]
            ev.gas_price[gid] = gclear.price[node] / cm.energy_density
    pbids = _power_bids_with(case, bids, capacity)
    try:
        res = clear_market(case.power, pbids)
    except InfeasibleDispatch as exc:
        ev.error = f"power clearing failed: {exc}"
        return ev
    ev.bus_lmp = dict(res.lmp)
    for gid in bids:
        ev.power[gid] = res.generation[gid]
        ev.lmp[gid] = res.lmp_at(case.power, gid)
    ev.profit_by_gen = fleet_profit(case, ev.lmp, ev.power, ev.gas_price, ev.gas)
    if check_monitor:
        ev.conduct_ok, ev.impact_ok = _monitor_flags(case, bids, pbids, list(bids))
    return ev


# ---------------------------------------------------------------------------
# iterative bidding


@dataclass
class GpaState:
    iteration: int
    bids: Dict[str, FleetBid]
    power_price: Dict[str, float] = field(default_factory=dict)
    power: Dict[str, float] = field(default_factory=dict)
    gas_price: Dict[str, float] = field(default_factory=dict)
    gas: Dict[str, float] = field(default_factory=dict)
    profit: float = -math.inf
    conduct_ok: bool = True
    impact_ok: bool = True
    accepted: bool = False
    budget_exhausted: bool = False
    trace: List[Tuple[int, float]] = field(default_factory=list)

    @classmethod
    def from_evaluation(cls, iteration, ev: Evaluation, **kw):
        return cls(iteration, dict(ev.bids), dict(ev.lmp), dict(ev.power), dict(ev.gas_price), dict(ev.gas),
                   ev.profit if ev.error is None else -math.inf, ev.conduct_ok, ev.impact_ok,
                   ev.feasible, **kw)


@dataclass(frozen=True)
class IterationRule:
    shrink: float = 0.9
    price_raise: float = 5.0  # $/MWh
    gas_margin: float = 0.10  # $/MMBtu
    shortfall_tol: float = 1e-6  # kg/s


def gpa_iterate(state: GpaState, case: CoupledCase, rule: IterationRule = IterationRule()) -> GpaState:
    """One pass of: clear power, size gas bids to the dispatch, clear gas, react to any shortfall."""
    cm = case.coupling
    fleet = list(state.bids)
    pbids = _power_bids_with(case, state.bids)
    try:
        res = clear_market(case.power, pbids)
    except InfeasibleDispatch as exc:
        raise ClearingFailed(f"power market: {exc}") from exc
    lmp = {g: res.lmp_at(case.power, g) for g in fleet}
    power = {g: res.generation[g] for g in fleet}
    gas_bids = {}
    for g in fleet:
        old = state.bids[g]
        qbar = power_to_gas_rate(max(power[g], 0.0), cm.heat_rate, cm.energy_density)
        price = old.gas_price
        if power[g] > 0:
            # break-even fuel price for this dispatch, less a margin
            price = max(lmp[g] / cm.heat_rate - rule.gas_margin, 0.0)
        gas_bids[g] = replace(old, gas_price=price, gas_max=qbar)
    try:
        gclear = clear_gas_market(case.gas, _gas_market_with(case, gas_bids))
    except MarketError as exc:
        raise ClearingFailed(f"gas market: {exc}") from exc
    gas, gprice = {}, {}
    for g in fleet:
        pid = cm.participant(g)
        gas[g] = gclear.quantity[pid]
        gprice[g] = gclear.price[case.gas_market.participant(pid).node] / cm.energy_density
    profit = sum(fleet_profit(case, lmp, power, gprice, gas).values())
    conduct, impact = _monitor_flags(case, gas_bids, pbids, fleet)
    nxt = {}
    for g in fleet:
        b = gas_bids[g]
        if gas[g] < b.gas_max - rule.shortfall_tol:
            b = replace(b, power_max=rule.shrink * b.power_max,
                        power_price=min(b.power_price + rule.price_raise, case.price_cap))
        nxt[g] = b
    ok = conduct and impact
    out = GpaState(state.iteration + 1, nxt, lmp, power, gprice, gas, profit, conduct, impact, ok)
    out.trace = list(state.trace) + [(out.iteration, profit if ok else -math.inf)]
    return out


# ---------------------------------------------------------------------------
# pattern search


@dataclass(frozen=True)
class SearchSteps:
    power_price: float = 5.0
    power_max: float = 5.0
    gas_price: float = 0.05
    gas_max: float = 1.0
    floor: float = 0.01
    gas_price_cap: float = 20.0  # $/MMBtu

    def as_tuple(self):
        return (self.power_price, self.power_max, self.gas_price, self.gas_max)


def _clip(case, gid, vec, steps):
    gen = case.power.generator(gid)
    cm = case.coupling
    qmax = power_to_gas_rate(gen.pmax, cm.heat_rate, cm.energy_density)
    bounds = ((0.0, case.price_cap), (0.0, gen.pmax), (0.0, steps.gas_price_cap), (0.0, qmax))
    return tuple(min(max(v, lo), hi) for v, (lo, hi) in zip(vec, bounds))


def pattern_search_bids(initial: GpaState, case: CoupledCase, budget: int,
                        steps: SearchSteps = SearchSteps(), log=None) -> GpaState:
    """Compass search with opportunistic polling in a fixed order; monitor violations score -inf."""
    fleet = sorted(initial.bids)
    if budget <= 0:
        return initial
    evals = 0
    best = evaluate_fleet_profit(case, initial.bids)
    evals += 1
    trace = [(0, best.score)]
    if log:
        log(0, best)
    mesh = 1.0
    base = steps.as_tuple()
    cache = {}
    while evals < budget and max(b * mesh for b in base) >= steps.floor:
        improved = False
        for gid in fleet:
            for comp in range(4):
                for sign in (1.0, -1.0):
                    if evals >= budget:
                        break
                    vec = list(best.bids[gid].as_tuple())
                    vec[comp] += sign * base[comp] * mesh
                    vec = _clip(case, gid, vec, steps)
                    if vec == best.bids[gid].as_tuple():
                        continue
                    cand = dict(best.bids)
                    cand[gid] = FleetBid(*vec)
                    key = tuple(cand[g].as_tuple() for g in fleet)
                    if key in cache:
                        ev = cache[key]
                    else:
                        ev = evaluate_fleet_profit(case, cand)
                        cache[key] = ev
                        evals += 1
                    if ev.score > best.score + 1e-9:
                        best = ev
                        improved = True
                        trace.append((evals, best.score))
                        if log:
                            log(evals, best)
                        break
                if improved or evals >= budget:
                    break
            if improved or evals >= budget:
                break
        if not improved and evals < budget:
            mesh *= 0.5
    out = GpaState.from_evaluation(initial.iteration + evals, best)
    out.trace = trace
    out.budget_exhausted = evals >= budget and max(b * mesh for b in base) >= steps.floor
    return out
