"""Steady-state gas pipeline physics and optimal gas flow market clearing.

Internally squared pressures are carried in MPa^2 and flows in kg/s; node
pressure limits are stored in Pa.  Pipe resistance ``beta`` is in Pa^2/(kg/s)^2.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, replace
from typing import Dict, Optional

import numpy as np

from . import lpcore
from .errors import (
    InfeasibleGasNetwork,
    InvalidNetwork,
    NegativeSquaredPressure,
    NewtonDivergence,
    ProblemTooLarge,
    SlpStall,
)

DEFAULT_WAVE_SPEED = 377.0
DEFAULT_EXPONENT = 0.2857
ENERGY_DENSITY = 0.0556  # MMBtu per kg
PA2_PER_MPA2 = 1e12
PI_MARGIN = 1e-6  # MPa^2
PRESSURE_TOL = 1e-6  # Pa


def pipe_resistance(wave_speed, friction, length, diameter):
    area = math.pi * diameter ** 2 / 4.0
    return wave_speed ** 2 * friction * length / (area ** 2 * diameter)


@dataclass(frozen=True)
class GasNode:
    id: int
    pmin: float
    pmax: float


@dataclass(frozen=True)
class Pipe:
    id: str
    from_node: int
    to_node: int
    length: float
    diameter: float
    friction: float
    resistance: Optional[float] = None


@dataclass(frozen=True)
class Compressor:
    id: str
    from_node: int
    to_node: int
    alpha_max: float
    cost: float
    exponent: float = DEFAULT_EXPONENT


@dataclass(frozen=True)
class GasNetwork:
    nodes: tuple
    pipes: tuple = ()
    compressors: tuple = ()
    wave_speed: float = DEFAULT_WAVE_SPEED

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "compressors", tuple(self.compressors))
        pipes = []
        for p in self.pipes:
            if p.resistance is None and p.diameter > 0:
                p = replace(p, resistance=pipe_resistance(self.wave_speed, p.friction, p.length, p.diameter))
            pipes.append(p)
        object.__setattr__(self, "pipes", tuple(pipes))

    @property
    def node_ids(self):
        return [n.id for n in self.nodes]

    @property
    def edges(self):
        """Pipes then compressors, as ``(id, from, to)``."""
        return [(p.id, p.from_node, p.to_node) for p in self.pipes] + [
            (c.id, c.from_node, c.to_node) for c in self.compressors
        ]

    def node(self, nid):
        for n in self.nodes:
            if n.id == nid:
                return n
        raise KeyError(nid)

    def validate(self):
        ids = self.node_ids
        if len(set(ids)) != len(ids):
            raise InvalidNetwork("duplicate gas node id")
        for n in self.nodes:
            if not 0 < n.pmin < n.pmax:
                raise InvalidNetwork(f"node {n.id}: need 0 < pmin < pmax")
        known = set(ids)
        for p in self.pipes:
            if p.from_node not in known or p.to_node not in known or p.from_node == p.to_node:
                raise InvalidNetwork(f"pipe {p.id}: bad end nodes")
            if not p.diameter > 0:
                raise InvalidNetwork(f"pipe {p.id}: diameter must be positive")
            if not (p.length > 0 and p.friction > 0):
                raise InvalidNetwork(f"pipe {p.id}: length and friction factor must be positive")
            beta = pipe_resistance(self.wave_speed, p.friction, p.length, p.diameter)
            if abs(p.resistance - beta) > 1e-9 * beta:
                raise InvalidNetwork(f"pipe {p.id}: stored resistance disagrees with pipe data")
        for c in self.compressors:
            if c.from_node not in known or c.to_node not in known or c.from_node == c.to_node:
                raise InvalidNetwork(f"compressor {c.id}: bad end nodes")
            if c.alpha_max < 1:
                raise InvalidNetwork(f"compressor {c.id}: alpha_max must be >= 1")


@dataclass(frozen=True)
class Participant:
    id: str
    node: int
    role: str  # "supply" | "demand"
    max_quantity: float  # kg/s
    price: float  # $/kg
    owner: str = ""


@dataclass(frozen=True)
class GasMarket:
    participants: tuple

    def __post_init__(self):
        object.__setattr__(self, "participants", tuple(self.participants))

    def participant(self, pid):
        for m in self.participants:
            if m.id == pid:
                return m
        raise KeyError(pid)

    def with_bid(self, pid, price=None, max_quantity=None):
        out = []
        for m in self.participants:
            if m.id == pid:
                m = replace(m, price=m.price if price is None else price,
                            max_quantity=m.max_quantity if max_quantity is None else max_quantity)
            out.append(m)
        return GasMarket(tuple(out))

    def validate(self, net):
        known = set(net.node_ids)
        for m in self.participants:
            if m.node not in known:
                raise InvalidNetwork(f"participant {m.id} attached to unknown node {m.node}")
            if m.role not in ("supply", "demand"):
                raise InvalidNetwork(f"participant {m.id}: role must be supply or demand")
            if m.max_quantity < 0 or not math.isfinite(m.price):
                raise InvalidNetwork(f"participant {m.id}: bad quantity or price")


@dataclass
class SteadyState:
    pressure: Dict[int, float]  # Pa
    flow: Dict[str, float]  # kg/s
    iterations: int
    residual: float


@dataclass
class GasClearing:
    quantity: Dict[str, float]  # s or d per participant, kg/s
    pressure: Dict[int, float]  # Pa
    flow: Dict[str, float]
    boost: Dict[str, float]
    price: Dict[int, float]  # $/kg
    objective: float  # $/s
    iterations: int = 0
    weymouth_residual: float = 0.0

    def price_per_mmbtu(self, node, energy_density=ENERGY_DENSITY):
        return self.price[node] / energy_density


def surplus(net, market, quantity, flow, boost):
    """Market surplus minus compression cost, in $/s."""
    total = 0.0
    for m in market.participants:
        q = quantity.get(m.id, 0.0)
        total += m.price * q if m.role == "demand" else -m.price * q
    for c in net.compressors:
        total -= c.cost * flow.get(c.id, 0.0) * (boost.get(c.id, 1.0) ** c.exponent - 1.0)
    return total


def net_injections(net, market, quantity):
    inj = {n: 0.0 for n in net.node_ids}
    for m in market.participants:
        q = quantity.get(m.id, 0.0)
        inj[m.node] += q if m.role == "supply" else -q
    return inj


# ---------------------------------------------------------------------------
# physics


def simulate_steady_state(net: GasNetwork, injections, boosts=None, reference=None,
                          tol=1e-10, max_iter=100) -> SteadyState:
    """Newton solve of Weymouth, compressor and mass-balance equations.

    ``reference`` is ``(node, pressure_pa)``; defaults to the first node at its pmax.
    Residuals are measured in MPa^2 (pipes, compressors) and kg/s (balances).
    """
    boosts = boosts or {}
    ids = net.node_ids
    order = {n: k for k, n in enumerate(ids)}
    inj = np.array([float(injections.get(n, 0.0)) for n in ids])
    if abs(inj.sum()) > 1e-9:
        raise InvalidNetwork(f"injections must balance (sum = {inj.sum():.3e})")
    ref_node, ref_p = reference if reference is not None else (ids[0], net.node(ids[0]).pmax)
    ref_pi = (ref_p / 1e6) ** 2
    edges = net.edges
    E, N = len(edges), len(ids)
    n_pipe = len(net.pipes)
    beta = np.array([p.resistance / PA2_PER_MPA2 for p in net.pipes])
    gamma = np.array([boosts.get(c.id, 1.0) ** 2 for c in net.compressors])
    inc = np.zeros((N, E))  # +1 inflow, -1 outflow
    for e, (_, i, j) in enumerate(edges):
        inc[order[i], e] -= 1.0
        inc[order[j], e] += 1.0
    free = [k for k in range(N) if ids[k] != ref_node]

    def unpack(x):
        phi = x[:E]
        pi = np.full(N, ref_pi)
        pi[free] = x[E:]
        return phi, pi

    def residual(x):
        phi, pi = unpack(x)
        r = np.empty(E + N - 1)
        for e, (_, i, j) in enumerate(edges):
            a, b = order[i], order[j]
            if e < n_pipe:
                r[e] = pi[a] - pi[b] - beta[e] * phi[e] * abs(phi[e])
            else:
                r[e] = pi[b] - gamma[e - n_pipe] * pi[a]
        r[E:] = (inc @ phi + inj)[free]
        return r

    def jacobian(x):
        phi, pi = unpack(x)
        J = np.zeros((E + N - 1, E + N - 1))
        col = {k: E + n for n, k in enumerate(free)}
        for e, (_, i, j) in enumerate(edges):
            a, b = order[i], order[j]
            if e < n_pipe:
                J[e, e] = -2.0 * beta[e] * max(abs(phi[e]), 1e-9)
                if a in col:
                    J[e, col[a]] += 1.0
                if b in col:
                    J[e, col[b]] -= 1.0
            else:
                if b in col:
                    J[e, col[b]] += 1.0
                if a in col:
                    J[e, col[a]] -= gamma[e - n_pipe]
        J[E:, :E] = inc[free]
        return J

    phi0 = np.linalg.lstsq(inc, -inj, rcond=None)[0] if E else np.zeros(0)
    pi0 = _propagate_reference(net, ref_node, ref_pi, gamma, order)
    x = np.concatenate([phi0, pi0[free]])
    r = residual(x)
    it = 0
    while np.max(np.abs(r), initial=0.0) > tol:
        if it >= max_iter:
            raise NewtonDivergence(f"no convergence after {max_iter} iterations (residual {np.max(np.abs(r)):.3e})")
        try:
            step = np.linalg.solve(jacobian(x), -r)
        except np.linalg.LinAlgError as exc:
            raise NewtonDivergence("singular Jacobian") from exc
        norm = np.max(np.abs(r))
        t = 1.0
        while True:
            trial = x + t * step
            rt = residual(trial)
            if np.max(np.abs(rt)) < norm or t < 1e-6:
                break
            t *= 0.5
        x, r = trial, rt
        it += 1
    phi, pi = unpack(x)
    if np.any(pi < 0):
        bad = [ids[k] for k in range(N) if pi[k] < 0]
        raise NegativeSquaredPressure(f"negative squared pressure at nodes {bad}")
    pressure = {n: float(math.sqrt(pi[order[n]]) * 1e6) for n in ids}
    flow = {eid: float(phi[e]) for e, (eid, _, _) in enumerate(edges)}
    return SteadyState(pressure, flow, it, float(np.max(np.abs(r), initial=0.0)))


def _propagate_reference(net, ref_node, ref_pi, gamma, order):
    """Initial squared pressures: reference value pushed across compressors, pipes flat."""
    pi = np.full(len(order), ref_pi)
    adj = {n: [] for n in order}
    for k, c in enumerate(net.compressors):
        adj[c.from_node].append((c.to_node, gamma[k]))
        adj[c.to_node].append((c.from_node, 1.0 / gamma[k]))
    for p in net.pipes:
        adj[p.from_node].append((p.to_node, 1.0))
        adj[p.to_node].append((p.from_node, 1.0))
    seen = {ref_node}
    stack = [ref_node]
    while stack:
        n = stack.pop()
        for nb, f in adj[n]:
            if nb not in seen:
                seen.add(nb)
                pi[order[nb]] = pi[order[n]] * f
                stack.append(nb)
    return pi


# ---------------------------------------------------------------------------
# optimal gas flow by sequential linear programming


@dataclass
class _Point:
    pi: np.ndarray
    phi: np.ndarray
    gamma: np.ndarray
    q: np.ndarray


class _OgfModel:
    def __init__(self, net, market, penalty):
        self.net = net
        self.market = market
        self.ids = net.node_ids
        self.order = {n: k for k, n in enumerate(self.ids)}
        self.edges = net.edges
        self.n_pipe = len(net.pipes)
        self.n_comp = len(net.compressors)
        self.beta = np.array([p.resistance / PA2_PER_MPA2 for p in net.pipes])
        # small inward margin so the a-posteriori simulation lands inside the limits
        self.pi_lo = np.array([(n.pmin / 1e6) ** 2 + PI_MARGIN for n in net.nodes])
        self.pi_hi = np.array([(n.pmax / 1e6) ** 2 - PI_MARGIN for n in net.nodes])
        self.g_hi = np.array([c.alpha_max ** 2 for c in net.compressors])
        self.parts = list(market.participants)
        self.qmax = np.array([m.max_quantity for m in self.parts])
        self.sign = np.array([1.0 if m.role == "demand" else -1.0 for m in self.parts])
        self.price = np.array([m.price for m in self.parts])
        self.penalty = penalty
        self.flow_scale = max(1.0, float(self.qmax.sum()))
        self.pi_scale = float(np.max(self.pi_hi))
        self.half_r = np.array([c.exponent / 2.0 for c in net.compressors])

    # true objective and constraint residuals
    def objective(self, x):
        J = float(self.price @ (self.sign * x.q))
        for k, c in enumerate(self.net.compressors):
            J -= c.cost * x.phi[self.n_pipe + k] * (x.gamma[k] ** self.half_r[k] - 1.0)
        return J

    def violations(self, x):
        out = []
        for e, (_, i, j) in enumerate(self.edges):
            a, b = self.order[i], self.order[j]
            if e < self.n_pipe:
                out.append(x.pi[a] - x.pi[b] - self.beta[e] * x.phi[e] * abs(x.phi[e]))
            else:
                out.append(x.pi[b] - x.gamma[e - self.n_pipe] * x.pi[a])
        return np.array(out)

    def merit(self, x):
        return self.objective(x) - self.penalty * float(np.sum(np.abs(self.violations(x))))

    def build_lp(self, x, radius):
        """LP model around ``x``; ``radius`` scales the trust region (None = no region)."""
        lp = lpcore.LinearProgram(lpcore.Sense.MAXIMIZE)
        inf = math.inf
        pv = []
        for k, n in enumerate(self.ids):
            lo, hi = self.pi_lo[k], self.pi_hi[k]
            if radius is not None:
                lo = max(lo, x.pi[k] - radius * self.pi_scale)
                hi = min(hi, x.pi[k] + radius * self.pi_scale)
            pv.append(lp.add_variable(f"pi:{n}", lo, hi))
        fv = []
        for e, (eid, _, _) in enumerate(self.edges):
            lo = -inf if e < self.n_pipe else 0.0
            hi = inf
            if radius is not None:
                lo = max(lo, x.phi[e] - radius * self.flow_scale)
                hi = x.phi[e] + radius * self.flow_scale
            fv.append(lp.add_variable(f"phi:{eid}", lo, hi))
        gv = []
        for k, c in enumerate(self.net.compressors):
            lo, hi = 1.0, self.g_hi[k]
            if radius is not None:
                width = max(self.g_hi[k] - 1.0, 1e-12)
                lo = max(lo, x.gamma[k] - radius * width)
                hi = min(hi, x.gamma[k] + radius * width)
            gv.append(lp.add_variable(f"gamma:{c.id}", lo, hi))
        qv = [lp.add_variable(f"q:{m.id}", 0.0, m.max_quantity, self.sign[k] * m.price)
              for k, m in enumerate(self.parts)]
        # compression cost, linearized in (phi, gamma)
        for k, c in enumerate(self.net.compressors):
            e = self.n_pipe + k
            g = x.gamma[k]
            h = self.half_r[k]
            lp.set_cost(fv[e], -c.cost * (g ** h - 1.0))
            lp.set_cost(gv[k], -c.cost * x.phi[e] * h * g ** (h - 1.0))
        # mass balance: out - in - supply + demand = 0
        for k, n in enumerate(self.ids):
            coeffs = {}
            for e, (_, i, j) in enumerate(self.edges):
                if i == n:
                    coeffs[fv[e]] = coeffs.get(fv[e], 0.0) + 1.0
                if j == n:
                    coeffs[fv[e]] = coeffs.get(fv[e], 0.0) - 1.0
            for m_idx, m in enumerate(self.parts):
                if m.node == n:
                    coeffs[qv[m_idx]] = coeffs.get(qv[m_idx], 0.0) + self.sign[m_idx]
            lp.add_eq(coeffs, 0.0, f"balance:{n}")
        # linearized physics with elastic slacks
        for e, (eid, i, j) in enumerate(self.edges):
            a, b = self.order[i], self.order[j]
            sp = lp.add_variable(f"slack+:{eid}", 0.0, inf, -self.penalty)
            sm = lp.add_variable(f"slack-:{eid}", 0.0, inf, -self.penalty)
            if e < self.n_pipe:
                f0 = x.phi[e]
                slope = 2.0 * self.beta[e] * max(abs(f0), 1e-6)
                # pi_i - pi_j - beta*(f0|f0| + slope*(phi - f0)) = 0
                rhs =self.beta[e] * f0 * abs(f0) - slope * f0
                lp.add_eq({pv[a]: 1.0, pv[b]: -1.0, fv[e]: -slope, sp: 1.0, sm: -1.0}, rhs, f"weymouth:{eid}")
            else:
                k = e - self.n_pipe
                # pi_j - g0*pi_i - pi_i0*(g - g0) = 0
                lp.add_eq({pv[b]: 1.0, pv[a]: -x.gamma[k], gv[k]: -x.pi[a], sp: 1.0, sm: -1.0},
                          -x.pi[a] * x.gamma[k], f"compressor:{eid}")
        return lp

    def point_from(self, sol):
        n_nodes, E, C = len(self.ids), len(self.edges), self.n_comp
        v = sol.primal
        pi = v[:n_nodes].copy()
        phi = v[n_nodes:n_nodes + E].copy()
        gamma = v[n_nodes + E:n_nodes + E + C].copy()
        q = v[n_nodes + E + C:n_nodes + E + C + len(self.parts)].copy()
        return _Point(pi, phi, gamma, q)

    def start(self):
        """Transshipment LP (no pressure physics), gamma = 1, pressures at the top of their ranges."""
        lp = lpcore.LinearProgram(lpcore.Sense.MAXIMIZE)
        fv = [lp.add_variable(f"phi:{eid}", -math.inf if e < self.n_pipe else 0.0, math.inf)
              for e, (eid, _, _) in enumerate(self.edges)]
        qv = [lp.add_variable(f"q:{m.id}", 0.0, m.max_quantity, self.sign[k] * m.price)
              for k, m in enumerate(self.parts)]
        for n in self.ids:
            coeffs = {}
            for e, (_, i, j) in enumerate(self.edges):
                if i == n:
                    coeffs[fv[e]] = coeffs.get(fv[e], 0.0) + 1.0
                if j == n:
                    coeffs[fv[e]] = coeffs.get(fv[e], 0.0) - 1.0
            for k, m in enumerate(self.parts):
                if m.node == n:
                    coeffs[qv[k]] = coeffs.get(qv[k], 0.0) + self.sign[k]
            lp.add_eq(coeffs, 0.0)
        sol = lpcore.solve(lp)
        E = len(self.edges)
        if sol.status is lpcore.Status.OPTIMAL:
            phi = sol.primal[:E].copy()
            q = sol.primal[E:].copy()
        else:
            phi, q = np.zeros(E), np.zeros(len(self.parts))
        return _Point(self.pi_hi.copy(), phi, np.ones(self.n_comp), q)


def clear_gas_market(net: GasNetwork, market: GasMarket, penalty=1e4, max_iter=500,
                     step_tol=1e-7, validate=True) -> GasClearing:
    """Locally optimal OGF clearing by trust-region SLP; prices from the mass-balance duals."""
    net.validate()
    market.validate(net)
    if not market.participants:
        raise InfeasibleGasNetwork("market has no participants")
    if not any(m.role == "supply" for m in market.participants) or not any(
        m.role == "demand" for m in market.participants
    ):
        raise InfeasibleGasNetwork("market needs at least one supply and one demand participant")
    model = _OgfModel(net, market, penalty)
    x = model.start()
    radius = 0.25
    merit = model.merit(x)
    last = None
    it = 0
    for it in range(1, max_iter + 1):
        lp = model.build_lp(x, radius)
        sol = lpcore.solve(lp)
        if sol.status is not lpcore.Status.OPTIMAL:
            raise InfeasibleGasNetwork(f"SLP subproblem {sol.status.value.lower()}")
        cand = model.point_from(sol)
        step = _step_norm(model, x, cand)
        predicted = sol.objective - _lin_merit_at(model, x)
        if step <= step_tol or predicted <= 1e-12 * max(1.0, abs(merit)):
            last = sol
            break
        new_merit = model.merit(cand)
        actual = new_merit - merit
        if actual >= 0.1 * predicted:
            x, merit, last = cand, new_merit, sol
            if actual >= 0.75 * predicted:
                radius = min(2.0 * radius, 1.0)
        else:
            radius *= 0.5
            if radius < 1e-10:
                if np.max(np.abs(model.violations(x)), initial=0.0) > 1e-6:
                    raise SlpStall("trust region collapsed without reaching feasibility")
                break
    viol = model.violations(x)
    if np.max(np.abs(viol), initial=0.0) > 1e-6:
        raise InfeasibleGasNetwork(
            f"no pressure-feasible flow found (max physics violation {np.max(np.abs(viol)):.3e} MPa^2)")
    prices = _nodal_prices(model, x, radius, last)
    quantity = {m.id: float(max(0.0, x.q[k])) for k, m in enumerate(model.parts)}
    boost = {c.id: float(math.sqrt(max(1.0, x.gamma[k]))) for k, c in enumerate(net.compressors)}
    flow = {eid: float(x.phi[e]) for e, (eid, _, _) in enumerate(model.edges)}
    pressure = {n: float(math.sqrt(max(x.pi[k], 0.0)) * 1e6) for k, n in enumerate(model.ids)}
    residual = float(np.max(np.abs(viol), initial=0.0))
    if validate:
        pressure, flow, residual = _validate_physics(net, market, quantity, boost, pressure, flow)
    return GasClearing(quantity, pressure, flow, boost, prices, surplus(net, market, quantity, flow, boost),
                       it, residual)


def _step_norm(model, x, y):
    parts = [np.abs(y.phi - x.phi) / model.flow_scale, np.abs(y.q - x.q) / model.flow_scale,
             np.abs(y.pi - x.pi) / model.pi_scale, np.abs(y.gamma - x.gamma)]
    return max((float(np.max(p)) for p in parts if p.size), default=0.0)


def _lin_merit_at(model, x):
    """Value of the LP objective at the expansion point (slacks set to the current violation).

    The compression term is linearized without its constant, so it is evaluated
    with the LP's own coefficients rather than the true objective.
    """
    J = float(model.price @ (model.sign * x.q))
    for k, c in enumerate(model.net.compressors):
        e, g, h = model.n_pipe + k, x.gamma[k], model.half_r[k]
        J -= c.cost * (g ** h - 1.0) * x.phi[e] + c.cost * x.phi[e] * h * g ** (h - 1.0) * g
    return J - model.penalty * float(np.sum(np.abs(model.violations(x))))


def _nodal_prices(model, x, radius, last):
    free = lpcore.solve(model.build_lp(x, None))
    use = last
    if free.status is lpcore.Status.OPTIMAL:
        moved = _step_norm(model, x, model.point_from(free))
        if moved <= 1e-6:
            use = free
    n = len(model.ids)
    if use is None:
        return {nid: 0.0 for nid in model.ids}
    return {nid: float(use.dual_eq[k]) + 0.0 for k, nid in enumerate(model.ids[:n])}


def _validate_physics(net, market, quantity, boost, pressure, flow):
    inj = net_injections(net, market, quantity)
    total = sum(inj.values())
    if abs(total) > 1e-9:
        # push rounding onto the largest injection so the physics solve sees an exact balance
        key = max(inj, key=lambda n: abs(inj[n]))
        inj[key] -= total
    ref = max(net.node_ids, key=lambda n: pressure[n])
    state = simulate_steady_state(net, inj, boost, (ref, pressure[ref]))
    for n in net.nodes:
        p = state.pressure[n.id]
        if p < n.pmin - PRESSURE_TOL or p > n.pmax + PRESSURE_TOL:
            raise InfeasibleGasNetwork(f"node {n.id}: simulated pressure {p:.1f} Pa outside its limits")
    return state.pressure, state.flow, state.residual


# ---------------------------------------------------------------------------
# brute-force oracle


def brute_force_ogf(net: GasNetwork, market: GasMarket, grid_step, alpha_step=0.05,
                    max_nodes=12, max_points=2_000_000) -> GasClearing:
    """Exhaustive grid search over quantities and compressor boosts.

    Pressure feasibility uses the fact that, with compressors on bridges, every
    squared pressure is affine in the reference squared pressure.
    """
    net.validate()
    market.validate(net)
    if len(net.nodes) > max_nodes:
        raise ProblemTooLarge(f"{len(net.nodes)} nodes exceeds the oracle limit of {max_nodes}")
    if grid_step <= 0:
        raise ValueError("grid_step must be positive")
    parts = list(market.participants)
    levels = [int(math.floor(m.max_quantity / grid_step + 1e-9)) for m in parts]
    alpha_grids = []
    for c in net.compressors:
        k = int(math.floor((c.alpha_max - 1.0) / alpha_step + 1e-9))
        alpha_grids.append([1.0 + i * alpha_step for i in range(k + 1)])
    supply = [k for k, m in enumerate(parts) if m.role == "supply"]
    demand = [k for k, m in enumerate(parts) if m.role == "demand"]
    count = math.prod(l + 1 for l in levels) * math.prod(len(g) for g in alpha_grids)
    if count > max_points:
        raise ProblemTooLarge(f"{count} grid points exceeds the oracle limit")
    best = None
    ref = net.node_ids[0]
    for dq in itertools.product(*(range(levels[k] + 1) for k in demand)):
        total = sum(dq)
        for sq in _compositions(total, [levels[k] for k in supply]):
            quantity = {}
            for k, v in zip(demand, dq):
                quantity[parts[k].id] = v * grid_step
            for k, v in zip(supply, sq):
                quantity[parts[k].id] = v * grid_step
            inj = net_injections(net, market, quantity)
            for alphas in itertools.product(*alpha_grids):
                boost = {c.id: a for c, a in zip(net.compressors, alphas)}
                state = _feasible_state(net, inj, boost, ref)
                if state is None:
                    continue
                J = surplus(net, market, quantity, state.flow, boost)
                if best is None or J > best[0] + 1e-12:
                    best = (J, dict(quantity), state, boost)
    if best is None:
        raise InfeasibleGasNetwork("no grid point is pressure-feasible")
    J, quantity, state, boost = best
    return GasClearing(quantity, state.pressure, state.flow, boost, {n: math.nan for n in net.node_ids}, J)


def _compositions(total, caps):
    """All tuples with entries in [0, cap] summing to ``total``."""
    if not caps:
        if total == 0:
            yield ()
        return
    head, rest = caps[0], caps[1:]
    for v in range(min(head, total) + 1):
        remaining = total - v
        if remaining > sum(rest):
            continue
        for tail in _compositions(remaining, rest):
            yield (v,) + tail


def _feasible_state(net, inj, boost, ref):
    hi_pi = max((n.pmax / 1e6) ** 2 for n in net.nodes)
    r1, r2 = 4.0 * hi_pi, 8.0 * hi_pi
    try:
        s1 = simulate_steady_state(net, inj, boost, (ref, math.sqrt(r1) * 1e6))
        s2 = simulate_steady_state(net, inj, boost, (ref, math.sqrt(r2) * 1e6))
    except (NewtonDivergence, NegativeSquaredPressure):
        return None
    lo, hi = -math.inf, math.inf
    for n in net.nodes:
        p1 = (s1.pressure[n.id] / 1e6) ** 2
        p2 = (s2.pressure[n.id] / 1e6) ** 2
        a = (p2 - p1) / (r2 - r1)
        b = p1 - a * r1
        lo = max(lo, ((n.pmin / 1e6) ** 2 - b) / a)
        hi = min(hi, ((n.pmax / 1e6) ** 2 - b) / a)
    if lo > hi + 1e-12:
        return None
    try:
        return simulate_steady_state(net, inj, boost, (ref, math.sqrt(max(hi, 0.0)) * 1e6))
    except (NewtonDivergence, NegativeSquaredPressure):
        return None
