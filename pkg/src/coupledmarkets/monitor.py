"""Market-power monitoring: constrained areas, conduct and impact tests, mitigation,
and the LP certificate for unbounded bidding power of a generator set."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Dict, FrozenSet, Optional

from . import lpcore
from .errors import InfeasibleDispatch, MalformedProgram, NonPositiveReference
from .powernet import Bid, PowerBidSet, PowerNetwork, build_opf, clear_market, compute_gsf

FORMAL = "formal"
NCA = "nca"
BCA = "bca"
MODES = (FORMAL, NCA, BCA)

AREA_EPSILON = 0.1  # MW
PRICE_TOL = 1e-6
RELAXED_LIMIT = 1e9


@dataclass(frozen=True)
class MonitorConfig:
    mode: str = FORMAL
    nca_fixed_cost: float = 44100.0  # $/MW-yr
    nca_constrained_hours: float = 2000.0
    adder: float = 100.0
    ratio: float = 4.0
    exempt_below: float = 25.0
    impact_ratio: float = 3.0
    cgsfc_cutoff: float = 0.05

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if not 0 < self.nca_constrained_hours <= 2000:
            raise ValueError("constrained hours must lie in (0, 2000]")
        if not 0.03 <= self.cgsfc_cutoff <= 0.06:
            raise ValueError("CGSFC cutoff must lie in [0.03, 0.06]")
        if not self.ratio > 1:
            raise ValueError("ratio must exceed 1")

    @property
    def nca_threshold(self):
        return self.nca_fixed_cost / self.nca_constrained_hours


@dataclass(frozen=True)
class ConductResult:
    passed: bool
    trigger: Optional[str] = None  # ratio | adder | exempt | notTested


NOT_TESTED = ConductResult(True, "notTested")


@dataclass(frozen=True)
class ImpactResult:
    passed: bool
    lmp_with_bid: float
    lmp_with_reference: float


@dataclass(frozen=True)
class ConstrainedArea:
    buses: FrozenSet[int] = frozenset()
    generators: FrozenSet[str] = frozenset()
    binding_lines: FrozenSet[int] = frozenset()

    @property
    def empty(self):
        return not self.buses and not self.generators


@dataclass
class GeneratorRecord:
    generator: str
    owner: str
    reference_cost: float
    bid_cost: float
    conduct: ConductResult
    impact: Optional[ImpactResult] = None
    mitigated: bool = False


@dataclass
class MonitorReport:
    records: Dict[str, GeneratorRecord]
    area: ConstrainedArea
    owner_cascade: FrozenSet[str] = frozenset()
    lmp: Dict[int, float] = field(default_factory=dict)

    @property
    def mitigated(self):
        return frozenset(g for g, r in self.records.items() if r.mitigated)

    def to_dict(self):
        return {
            "constrained_area": {
                "buses": sorted(self.area.buses),
                "generators": sorted(self.area.generators),
                "binding_lines": sorted(self.area.binding_lines),
            },
            "owner_cascade": sorted(self.owner_cascade),
            "lmp": {str(b): v for b, v in sorted(self.lmp.items())},
            "generators": [
                {
                    "id": r.generator,
                    "owner": r.owner,
                    "reference_cost": r.reference_cost,
                    "bid_cost": r.bid_cost,
                    "conduct": "pass" if r.conduct.passed else "fail",
                    "conduct_trigger": r.conduct.trigger,
                    "impact": None if r.impact is None else {
                        "result": "pass" if r.impact.passed else "fail",
                        "lmp_with_bid": r.impact.lmp_with_bid,
                        "lmp_with_reference": r.impact.lmp_with_reference,
                    },
                    "mitigated": r.mitigated,
                }
                for r in self.records.values()
            ],
        }

    def to_text(self):
        lines = [
            "constrained area: buses=%s generators=%s binding_lines=%s" % (
                sorted(self.area.buses), sorted(self.area.generators), sorted(self.area.binding_lines)),
        ]
        for r in self.records.values():
            conduct = "pass" if r.conduct.passed else "fail"
            if r.conduct.trigger:
                conduct += f"({r.conduct.trigger})"
            impact = "-"
            if r.impact is not None:
                impact = "%s(bid_lmp=%.2f ref_lmp=%.2f)" % (
                    "pass" if r.impact.passed else "fail", r.impact.lmp_with_bid, r.impact.lmp_with_reference)
            lines.append(f"generator {r.generator} owner={r.owner or '-'} reference={r.reference_cost:.2f} "
                         f"bid={r.bid_cost:.2f} conduct={conduct} impact={impact} mitigated={r.mitigated}")
        lines.append("owner cascade: %s" % (sorted(self.owner_cascade) or "-"))
        return "\n".join(lines)


# ---------------------------------------------------------------------------
# tests


def conduct_test(bid, reference, cfg: MonitorConfig = MonitorConfig()) -> ConductResult:
    """Strict thresholds: a bid exactly at 4x the reference does not trigger."""
    if not reference > 0:
        raise NonPositiveReference(f"reference level must be positive, got {reference}")
    if cfg.mode == NCA:
        if bid > reference + cfg.nca_threshold:
            return ConductResult(False, "adder")
        return ConductResult(True)
    if cfg.mode == BCA and bid < cfg.exempt_below:
        return ConductResult(True, "exempt")
    # when both thresholds are crossed the adder is reported
    if bid > reference + cfg.adder:
        return ConductResult(False, "adder")
    if bid > cfg.ratio * reference:
        return ConductResult(False, "ratio")
    return ConductResult(True)


def impact_fails(lmp_bid, lmp_ref, cfg: MonitorConfig = MonitorConfig()):
    if cfg.mode == NCA:
        return lmp_bid - lmp_ref > cfg.nca_threshold
    if cfg.mode == BCA:
        return lmp_bid >= min(cfg.impact_ratio * lmp_ref, lmp_ref + cfg.adder)
    return lmp_bid >= cfg.impact_ratio * lmp_ref or lmp_bid >= lmp_ref + cfg.adder


def impact_test(net: PowerNetwork, bids, failed_gen, cfg: MonitorConfig = MonitorConfig(),
                with_bid=None) -> ImpactResult:
    """Re-clear with ``failed_gen`` at its reference price and compare the LMP at its bus."""
    bids = PowerBidSet(bids)
    gen = net.generator(failed_gen)
    with_bid = with_bid or clear_market(net, bids)
    ref_bids = bids.with_bid(failed_gen, replace(bids.get(failed_gen, Bid(gen.reference_cost)),
                                                 price=gen.reference_cost))
    with_ref = clear_market(net, ref_bids)
    lb, lr = with_bid.lmp[gen.bus], with_ref.lmp[gen.bus]
    return ImpactResult(not impact_fails(lb, lr, cfg), lb, lr)


def _incremental_cost(net, bids, bus, frozen=()):
    """Cost of serving AREA_EPSILON more load at ``bus``; inf when infeasible."""
    base = clear_market(net, bids)
    pinned = PowerBidSet(bids)
    for gid in frozen:
        p = base.generation[gid]
        old = pinned.get(gid, Bid(net.generator(gid).reference_cost))
        pinned[gid] = replace(old, pmin=p, pmax=p)
    try:
        bumped = clear_market(net.add_demand(bus, AREA_EPSILON), pinned)
    except InfeasibleDispatch:
        return math.inf
    # frozen units keep their costs, so the difference isolates the re-dispatch
    return (bumped.objective - base.objective) / AREA_EPSILON


def detect_constrained_area(net: PowerNetwork, res, cfg: MonitorConfig = MonitorConfig(), bids=None) -> ConstrainedArea:
    """Load pocket behind the binding lines whose extra load only in-area units can serve."""
    if not res.binding_lines:
        return ConstrainedArea()
    bids = PowerBidSet(bids or PowerBidSet.reference(net))
    relaxed = net
    for k in res.binding_lines:
        relaxed = relaxed.with_line_limit(k, RELAXED_LIMIT)
    candidates = set()
    for b in net.bus_ids:
        uncongested = _incremental_cost(relaxed, bids, b)
        if res.lmp[b] > uncongested + PRICE_TOL:
            candidates.add(b)
    inside = [g.id for g in net.generators if g.bus in candidates]
    buses = {b for b in candidates if math.isinf(_incremental_cost(net, bids, b, frozen=inside))}
    gens = {g.id for g in net.generators if g.bus in buses}
    if cfg.mode == BCA and buses:
        gsf = compute_gsf(net)
        for gi, g in enumerate(net.generators):
            if any(abs(gsf[gi, k]) > cfg.cgsfc_cutoff for k in res.binding_lines):
                gens.add(g.id)
    return ConstrainedArea(frozenset(buses), frozenset(gens), frozenset(res.binding_lines))


def run_monitor(net: PowerNetwork, bids, cfg: MonitorConfig = MonitorConfig()) -> MonitorReport:
    bids = PowerBidSet(bids or PowerBidSet.reference(net))
    res = clear_market(net, bids)
    area = detect_constrained_area(net, res, cfg, bids)
    records = {}
    for g in net.generators:
        price = bids.price(g)
        rec = GeneratorRecord(g.id, g.owner, g.reference_cost, price, NOT_TESTED)
        if g.id in area.generators:
            rec.conduct = conduct_test(price, g.reference_cost, cfg)
            if not rec.conduct.passed:
                rec.impact = impact_test(net, bids, g.id, cfg, with_bid=res)
                rec.mitigated = not rec.impact.passed
        records[g.id] = rec
    owners = {records[g].owner for g in records if records[g].mitigated and records[g].owner}
    cascade = frozenset(
        g.id for g in net.generators
        if g.owner in owners and g.id in area.generators and not records[g.id].mitigated
    )
    return MonitorReport(records, area, cascade, dict(res.lmp))


def mitigate(net: PowerNetwork, bids, report: MonitorReport) -> PowerBidSet:
    """Replace the price of every mitigated or cascaded unit with its reference level."""
    out = PowerBidSet(bids)
    for gid in sorted(report.mitigated | report.owner_cascade):
        gen = net.generator(gid)
        out[gid] = replace(out.get(gid, Bid(gen.reference_cost)), price=gen.reference_cost)
    return out


# ---------------------------------------------------------------------------
# certificate


@dataclass
class CertificateVerdict:
    generators: FrozenSet[str]
    unbounded: bool
    primal_status: lpcore.Status
    dual_status: lpcore.Status
    witness: Optional[Dict[str, float]] = None
    farkas: Optional[lpcore.FarkasCertificate] = None

    @property
    def label(self):
        return "Unbounded" if self.unbounded else "Bounded"


def _opf_parts(net, bids, g_star):
    lp = build_opf(net, bids)
    names = [v.name for v in lp.variables]
    star = {lp.index(f"P:{g}") for g in g_star}
    slack = lp.index(f"theta:{net.slack}")
    cols = [j for j in range(len(names)) if j != slack]
    c, A_eq, b_eq, A_ub, b_ub, _, _ = lp.arrays()
    return lp, names, star, cols, c, A_eq, b_eq, A_ub, b_ub


def certificate_primal_lp(net: PowerNetwork, bids, g_star) -> lpcore.LinearProgram:
    """Single-level dual form over (lambda, mu, x_c): the optimal bid-cost problem."""
    _, names, star, cols, c, A_eq, b_eq, A_ub, b_ub = _opf_parts(net, bids, g_star)
    lp = lpcore.LinearProgram(lpcore.Sense.MAXIMIZE)
    lam = [lp.add_variable(f"lambda:{k}", -math.inf, math.inf, b_eq[k]) for k in range(len(b_eq))]
    mu = [lp.add_variable(f"mu:{k}", 0.0, math.inf, -b_ub[k]) for k in range(len(b_ub))]
    xc = {j: lp.add_variable(f"x_c:{names[j][2:]}", -math.inf, math.inf) for j in sorted(star)}
    for j in cols:
        coeffs = {}
        for k in range(len(b_eq)):
            if A_eq[k, j]:
                coeffs[lam[k]] = A_eq[k, j]
        for k in range(len(b_ub)):
            if A_ub[k, j]:
                coeffs[mu[k]] = -A_ub[k, j]
        if j in xc:
            coeffs[xc[j]] = -1.0
            lp.add_eq(coeffs, 0.0, f"col:{names[j]}")
        else:
            lp.add_eq(coeffs, c[j], f"col:{names[j]}")
    return lp


def certificate_dual_lp(net: PowerNetwork, bids, g_star) -> lpcore.LinearProgram:
    """OPF over the other units' bids with the set's generation pinned to zero."""
    lp = build_opf(net, bids)
    for g in g_star:
        j = lp.index(f"P:{g}")
        lp.set_cost(j, 0.0)
        lp.add_eq({j: 1.0}, 0.0, f"pin:{g}")
    return lp


def market_power_certificate(net: PowerNetwork, bids, g_star) -> CertificateVerdict:
    g_star = frozenset(g_star)
    if not g_star:
        raise MalformedProgram("generator set must be nonempty")
    for g in g_star:
        net.generator(g)
    bids = PowerBidSet(bids or PowerBidSet.reference(net))
    primal = lpcore.solve(certificate_primal_lp(net, bids, g_star))
    dual_lp = certificate_dual_lp(net, bids, g_star)
    dual = lpcore.solve(dual_lp)
    unbounded = primal.status is not lpcore.Status.INFEASIBLE and dual.status is lpcore.Status.INFEASIBLE
    witness = None
    if dual.status is lpcore.Status.OPTIMAL:
        witness = {g.id: float(dual[f"P:{g.id}"]) for g in net.generators}
    return CertificateVerdict(g_star, unbounded, primal.status, dual.status, witness, dual.certificate)


def escalation_revenues(net: PowerNetwork, bids, g_star, steps=6, factor=10.0):
    """Set revenue sum(c*P) over repeated x``factor`` escalation of the set's bids."""
    bids = PowerBidSet(bids or PowerBidSet.reference(net))
    out = []
    current = bids
    for _ in range(steps):
        current = PowerBidSet(current)
        for g in g_star:
            gen = net.generator(g)
            price = current.price(gen)
            current[g] = replace(current.get(g, Bid(gen.reference_cost)), price=price * factor)
        res = clear_market(net, current)
        out.append(sum(current.price(net.generator(g)) * res.generation[g] for g in g_star))
    return out


def escalation_unbounded(revenues, tol=1e-6):
    return all(b > a + tol for a, b in zip(revenues, revenues[1:]))
