"""DC optimal power flow: network model, market clearing, LMPs and shift factors."""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Dict, Mapping, Optional

import numpy as np

from . import lpcore
from .errors import DisconnectedNetwork, InfeasibleDispatch, InvalidNetwork

BINDING_TOL = 1e-6


@dataclass(frozen=True)
class Bus:
    id: int
    demand: float = 0.0


@dataclass(frozen=True)
class Line:
    from_bus: int
    to_bus: int
    reactance: float
    limit: float


@dataclass(frozen=True)
class Generator:
    id: str
    bus: int
    pmin: float
    pmax: float
    reference_cost: float
    owner: str = ""


@dataclass(frozen=True)
class PowerNetwork:
    buses: tuple
    lines: tuple
    generators: tuple

    def __post_init__(self):
        object.__setattr__(self, "buses", tuple(self.buses))
        object.__setattr__(self, "lines", tuple(self.lines))
        object.__setattr__(self, "generators", tuple(self.generators))

    # -- lookups -----------------------------------------------------------
    @property
    def bus_ids(self):
        return [b.id for b in self.buses]

    @property
    def slack(self):
        return min(self.bus_ids)

    def generator(self, gid):
        for g in self.generators:
            if g.id == gid:
                return g
        raise KeyError(gid)

    def demand(self, bus_id):
        for b in self.buses:
            if b.id == bus_id:
                return b.demand
        raise KeyError(bus_id)

    # -- modified copies ---------------------------------------------------
    def with_demand(self, bus_id, demand):
        return replace(self, buses=tuple(replace(b, demand=demand) if b.id == bus_id else b for b in self.buses))

    def add_demand(self, bus_id, delta):
        return self.with_demand(bus_id, self.demand(bus_id) + delta)

    def with_line_limit(self, index, limit):
        return replace(self, lines=tuple(replace(l, limit=limit) if k == index else l for k, l in enumerate(self.lines)))

    def with_all_line_limits(self, limit):
        return replace(self, lines=tuple(replace(l, limit=limit) for l in self.lines))

    def line_index(self, a, b):
        for k, l in enumerate(self.lines):
            if {l.from_bus, l.to_bus} == {a, b}:
                return k
        raise KeyError((a, b))

    def without_generator(self, gid):
        self.generator(gid)
        return replace(self, generators=tuple(g for g in self.generators if g.id != gid))

    def with_generator(self, gid, **changes):
        return replace(self, generators=tuple(replace(g, **changes) if g.id == gid else g for g in self.generators))

    def validate(self):
        ids = self.bus_ids
        if len(set(ids)) != len(ids):
            raise InvalidNetwork("duplicate bus id")
        if not ids:
            raise InvalidNetwork("network has no buses")
        for b in self.buses:
            if b.demand < 0 or not math.isfinite(b.demand):
                raise InvalidNetwork(f"bus {b.id}: demand must be finite and nonnegative")
        known = set(ids)
        for k, l in enumerate(self.lines):
            if l.from_bus not in known or l.to_bus not in known:
                raise InvalidNetwork(f"line {k} references an unknown bus")
            if not l.reactance > 0:
                raise InvalidNetwork(f"line {k}: reactance must be positive")
            if not l.limit > 0:
                raise InvalidNetwork(f"line {k}: thermal limit must be positive")
        for g in self.generators:
            if g.bus not in known:
                raise InvalidNetwork(f"generator {g.id} references unknown bus {g.bus}")
            if g.pmin > g.pmax:
                raise InvalidNetwork(f"generator {g.id}: pmin > pmax")
        _check_connected(self)


def _check_connected(net):
    adj = {b: [] for b in net.bus_ids}
    for l in net.lines:
        adj[l.from_bus].append(l.to_bus)
        adj[l.to_bus].append(l.from_bus)
    start = net.bus_ids[0]
    seen = {start}
    queue = deque([start])
    while queue:
        for nb in adj[queue.popleft()]:
            if nb not in seen:
                seen.add(nb)
                queue.append(nb)
    if len(seen) != len(adj):
        raise DisconnectedNetwork(f"buses {sorted(set(adj) - seen)} are not connected to bus {start}")


@dataclass(frozen=True)
class Bid:
    """Price bid plus optional quantity overrides of the physical limits."""

    price: float
    pmax: Optional[float] = None
    pmin: Optional[float] = None


class PowerBidSet(dict):
    """Mapping generator id -> Bid."""

    @classmethod
    def reference(cls, net):
        return cls({g.id: Bid(g.reference_cost) for g in net.generators})

    def with_price(self, gid, price):
        out = PowerBidSet(self)
        out[gid] = replace(self[gid], price=price)
        return out

    def with_bid(self, gid, bid):
        out = PowerBidSet(self)
        out[gid] = bid
        return out

    def limits(self, gen):
        bid = self.get(gen.id)
        lo, hi = gen.pmin, gen.pmax
        if bid is not None:
            if bid.pmax is not None:
                hi = min(hi, bid.pmax)
            if bid.pmin is not None:
                lo = max(lo, bid.pmin)
        return lo, hi

    def price(self, gen):
        bid = self.get(gen.id)
        return gen.reference_cost if bid is None else bid.price

    def validate(self, net):
        for gid, bid in self.items():
            gen = net.generator(gid)
            if not math.isfinite(bid.price):
                raise InvalidNetwork(f"bid for {gid}: price must be finite")
            if bid.pmax is not None and bid.pmax > gen.pmax + 1e-9:
                raise InvalidNetwork(f"bid for {gid}: offered pmax above physical pmax")
            if bid.pmin is not None and bid.pmin < gen.pmin - 1e-9:
                raise InvalidNetwork(f"bid for {gid}: offered pmin below physical pmin")


@dataclass
class DispatchResult:
    generation: Dict[str, float]
    theta: Dict[int, float]
    lmp: Dict[int, float]
    flow: Dict[int, float]
    binding_lines: frozenset
    objective: float
    solution: lpcore.LpSolution = field(repr=False, default=None)

    def lmp_at(self, net, gid):
        return self.lmp[net.generator(gid).bus]


def build_opf(net: PowerNetwork, bids: Mapping = None) -> lpcore.LinearProgram:
    """Variables ``P:<gen>`` then ``theta:<bus>``; the slack angle is pinned to zero."""
    net.validate()
    bids = PowerBidSet(bids or PowerBidSet.reference(net))
    lp = lpcore.LinearProgram(lpcore.Sense.MINIMIZE)
    pidx = {}
    for g in net.generators:
        pidx[g.id] = lp.add_variable(f"P:{g.id}", -math.inf, math.inf, bids.price(g))
    tidx = {}
    for b in net.buses:
        if b.id == net.slack:
            tidx[b.id] = lp.add_variable(f"theta:{b.id}", 0.0, 0.0)
        else:
            tidx[b.id] = lp.add_variable(f"theta:{b.id}", -math.inf, math.inf)
    for b in net.buses:
        coeffs = {}
        for g in net.generators:
            if g.bus == b.id:
                coeffs[pidx[g.id]] = coeffs.get(pidx[g.id], 0.0) + 1.0
        for l in net.lines:
            susc = 1.0 / l.reactance
            if l.from_bus == b.id:
                coeffs[tidx[l.from_bus]] = coeffs.get(tidx[l.from_bus], 0.0) - susc
                coeffs[tidx[l.to_bus]] = coeffs.get(tidx[l.to_bus], 0.0) + susc
            elif l.to_bus == b.id:
                coeffs[tidx[l.to_bus]] = coeffs.get(tidx[l.to_bus], 0.0) - susc
                coeffs[tidx[l.from_bus]] = coeffs.get(tidx[l.from_bus], 0.0) + susc
        lp.add_eq(coeffs, b.demand, f"balance:{b.id}")
    for k, l in enumerate(net.lines):
        susc = 1.0 / l.reactance
        flow = {tidx[l.from_bus]: susc, tidx[l.to_bus]: -susc}
        lp.add_le(flow, l.limit, f"line:{k}:+")
        lp.add_le({i: -v for i, v in flow.items()}, l.limit, f"line:{k}:-")
    for g in net.generators:
        lo, hi = bids.limits(g)
        lp.add_le({pidx[g.id]: 1.0}, hi, f"gen:{g.id}:max")
        lp.add_le({pidx[g.id]: -1.0}, -lo, f"gen:{g.id}:min")
    return lp


def clear_market(net: PowerNetwork, bids: Mapping = None) -> DispatchResult:
    lp = build_opf(net, bids)
    sol = lpcore.solve(lp)
    if sol.status is not lpcore.Status.OPTIMAL:
        raise InfeasibleDispatch(f"DC-OPF is {sol.status.value.lower()}", sol.certificate)
    ng = len(net.generators)
    gen = {g.id: float(sol.primal[i]) for i, g in enumerate(net.generators)}
    theta = {b.id: float(sol.primal[ng + k]) for k, b in enumerate(net.buses)}
    lmp = {b.id: float(sol.dual_eq[k]) + 0.0 for k, b in enumerate(net.buses)}
    flow = {}
    binding = set()
    for k, l in enumerate(net.lines):
        f = (theta[l.from_bus] - theta[l.to_bus]) / l.reactance
        flow[k] = f
        if abs(f) >= l.limit - BINDING_TOL:
            binding.add(k)
    return DispatchResult(gen, theta, lmp, flow, frozenset(binding), sol.objective, sol)


def compute_gsf(net: PowerNetwork) -> np.ndarray:
    """Generator x line shift factors, injection at the generator's bus withdrawn at the slack."""
    net.validate()
    ptdf = bus_ptdf(net)
    order = {b: k for k, b in enumerate(net.bus_ids)}
    return np.array([ptdf[:, order[g.bus]] for g in net.generators]).reshape(len(net.generators), len(net.lines))


def bus_ptdf(net: PowerNetwork) -> np.ndarray:
    """Line x bus PTDF matrix for injections withdrawn at the slack bus."""
    ids = net.bus_ids
    order = {b: k for k, b in enumerate(ids)}
    n = len(ids)
    B = np.zeros((n, n))
    for l in net.lines:
        i, j = order[l.from_bus], order[l.to_bus]
        s = 1.0 / l.reactance
        B[i, i] += s
        B[j, j] += s
        B[i, j] -= s
        B[j, i] -= s
    keep = [k for k in range(n) if ids[k] != net.slack]
    X = np.zeros((n, n))
    if keep:
        X[np.ix_(keep, keep)] = np.linalg.inv(B[np.ix_(keep, keep)])
    out = np.zeros((len(net.lines), n))
    for k, l in enumerate(net.lines):
        i, j = order[l.from_bus], order[l.to_bus]
        out[k] = (X[i] - X[j]) / l.reactance
    out[np.abs(out) < 1e-14] = 0.0
    return out


def lmp_decomposition(res: DispatchResult, net: PowerNetwork):
    """Per-bus ``(energy, congestion)`` with energy taken at the slack bus."""
    energy = res.lmp[net.slack]
    return {b: (energy, lmp - energy) for b, lmp in res.lmp.items()}
