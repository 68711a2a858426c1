"""Scenario files, case importers and the fixture directory.

Native format: one record per line, ``kind key=value key=value ...``. Blank
lines and ``#`` comments are ignored. Numeric keys carry their unit in the
name (``demand_mw``, ``pmin_mpa``, ``price_usd_per_mmbtu``). Values are kept
in file units on the parsed object; conversion happens when domain objects
are built, so parse -> serialize -> parse is exact.
"""
from __future__ import annotations

import math
import os
import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from .coupling import CoupledCase, CouplingMap, FleetBid
from .errors import MissingSection, ParseError, UnsupportedCaseFeature, ValidationError
from .gasnet import (
    DEFAULT_EXPONENT,
    DEFAULT_WAVE_SPEED,
    Compressor,
    GasMarket,
    GasNetwork,
    GasNode,
    Participant,
    Pipe,
)
from .monitor import MonitorConfig
from .powernet import Bid, Bus, Generator, Line, PowerBidSet, PowerNetwork

FIXTURE_ENV = "COUPLEDMARKETS_FIXTURES"

REQ, OPT = True, False

# kind -> ordered {key: (type, required)}
SCHEMA: Dict[str, Dict[str, Tuple[type, bool]]] = {
    "scenario": {"name": (str, REQ)},
    "import": {"kind": (str, REQ), "file": (str, REQ), "modified": (str, OPT)},
    "bus": {"id": (int, REQ), "demand_mw": (float, REQ)},
    "line": {"from": (int, REQ), "to": (int, REQ), "reactance_pu": (float, REQ), "limit_mw": (float, REQ)},
    "generator": {"id": (str, REQ), "bus": (int, REQ), "pmin_mw": (float, REQ), "pmax_mw": (float, REQ),
                  "reference_usd_per_mwh": (float, REQ), "owner": (str, OPT)},
    "bid": {"generator": (str, REQ), "price_usd_per_mwh": (float, REQ), "pmax_mw": (float, OPT),
            "pmin_mw": (float, OPT)},
    "gas_network": {"wave_speed_mps": (float, REQ)},
    "gas_node": {"id": (int, REQ), "pmin_mpa": (float, REQ), "pmax_mpa": (float, REQ)},
    "pipe": {"id": (str, REQ), "from": (int, REQ), "to": (int, REQ), "length_m": (float, REQ),
             "diameter_m": (float, REQ), "friction": (float, REQ)},
    "compressor": {"id": (str, REQ), "from": (int, REQ), "to": (int, REQ), "alpha_max": (float, REQ),
                   "cost_usd_per_kg": (float, REQ), "exponent": (float, OPT)},
    "participant": {"id": (str, REQ), "node": (int, REQ), "role": (str, REQ), "qmax_kgps": (float, REQ),
                    "price_usd_per_mmbtu": (float, REQ), "owner": (str, OPT)},
    "gas_bid": {"participant": (str, REQ), "price_usd_per_mmbtu": (float, OPT), "qmax_kgps": (float, OPT)},
    "coupling": {"heat_rate_mmbtu_per_mwh": (float, REQ), "energy_density_mmbtu_per_kg": (float, REQ)},
    "link": {"generator": (str, REQ), "participant": (str, REQ)},
    "monitor": {"mode": (str, REQ), "nca_fixed_cost_usd_per_mw": (float, OPT), "nca_hours": (float, OPT),
                "cgsfc_cutoff": (float, OPT)},
    "search": {"budget": (int, OPT), "price_cap_usd_per_mwh": (float, OPT)},
    "start": {"label": (str, REQ), "generator": (str, REQ), "power_price_usd_per_mwh": (float, REQ),
              "power_max_mw": (float, REQ), "gas_price_usd_per_mmbtu": (float, REQ), "gas_max_kgps": (float, REQ)},
}

SINGLETONS = {"scenario", "gas_network", "coupling", "monitor", "search"}


@dataclass(frozen=True)
class Record:
    kind: str
    fields: Tuple[Tuple[str, object], ...]
    line: int = field(default=0, compare=False)

    def get(self, key, default=None):
        for k, v in self.fields:
            if k == key:
                return v
        return default

    def __getitem__(self, key):
        for k, v in self.fields:
            if k == key:
                return v
        raise KeyError(key)


def _format_value(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


@dataclass(frozen=True)
class ScenarioFile:
    records: Tuple[Record, ...]
    base_dir: Optional[str] = field(default=None, compare=False)

    # -- queries -------------------------------------------------------------
    def of(self, kind):
        return [r for r in self.records if r.kind == kind]

    def one(self, kind):
        rs = self.of(kind)
        return rs[0] if rs else None

    @property
    def name(self):
        r = self.one("scenario")
        return r["name"] if r else ""

    def has_power(self):
        return bool(self.of("bus")) or any(r["kind"] == "matpower" for r in self.of("import"))

    def has_gas(self):
        return bool(self.of("gas_node")) or any(r["kind"] == "gaslib" for r in self.of("import"))

    # -- builders --------------------------------------------------------------
    def _imported(self, kind):
        for r in self.of("import"):
            if r["kind"] == kind:
                text = _read_fixture_text(r["file"], self.base_dir)
                if kind == "matpower":
                    return import_matpower_case(text, modified=r.get("modified") == "ieee14")
                return import_gaslib_case(text, modified=r.get("modified") == "gaslib11")
        return None

    def power_network(self) -> PowerNetwork:
        imported = self._imported("matpower")
        buses, lines, gens = [], [], []
        if imported is not None:
            net, _ = imported
            buses, lines, gens = list(net.buses), list(net.lines), list(net.generators)
        buses += [Bus(r["id"], r["demand_mw"]) for r in self.of("bus")]
        lines += [Line(r["from"], r["to"], r["reactance_pu"], r["limit_mw"]) for r in self.of("line")]
        gens += [Generator(r["id"], r["bus"], r["pmin_mw"], r["pmax_mw"], r["reference_usd_per_mwh"],
                           r.get("owner", "")) for r in self.of("generator")]
        if not buses:
            raise MissingSection("scenario has no power network")
        return PowerNetwork(buses, lines, gens)

    def power_bids(self) -> PowerBidSet:
        net = self.power_network()
        bids = PowerBidSet.reference(net)
        for r in self.of("bid"):
            bids[r["generator"]] = Bid(r["price_usd_per_mwh"], r.get("pmax_mw"), r.get("pmin_mw"))
        return bids

    def energy_density(self):
        c = self.one("coupling")
        return c["energy_density_mmbtu_per_kg"] if c else 0.0556

    def gas_network(self) -> GasNetwork:
        imported = self._imported("gaslib")
        if imported is not None:
            return imported[0]
        if not self.of("gas_node"):
            raise MissingSection("scenario has no gas network")
        g = self.one("gas_network")
        wave = g["wave_speed_mps"] if g else DEFAULT_WAVE_SPEED
        nodes = [GasNode(r["id"], r["pmin_mpa"] * 1e6, r["pmax_mpa"] * 1e6) for r in self.of("gas_node")]
        pipes = [Pipe(r["id"], r["from"], r["to"], r["length_m"], r["diameter_m"], r["friction"])
                 for r in self.of("pipe")]
        comps = [Compressor(r["id"], r["from"], r["to"], r["alpha_max"], r["cost_usd_per_kg"],
                            r.get("exponent", DEFAULT_EXPONENT)) for r in self.of("compressor")]
        return GasNetwork(nodes, pipes, comps, wave)

    def gas_market(self) -> GasMarket:
        e = self.energy_density()
        imported = self._imported("gaslib")
        parts = list(imported[1].participants) if imported is not None else []
        parts += [Participant(r["id"], r["node"], r["role"], r["qmax_kgps"], r["price_usd_per_mmbtu"] * e,
                              r.get("owner", "")) for r in self.of("participant")]
        if not parts:
            raise MissingSection("scenario has no gas market")
        market = GasMarket(parts)
        for r in self.of("gas_bid"):
            price = r.get("price_usd_per_mmbtu")
            market = market.with_bid(r["participant"], price=None if price is None else price * e,
                                     max_quantity=r.get("qmax_kgps"))
        return market

    def coupling_map(self) -> CouplingMap:
        links = [(r["generator"], r["participant"]) for r in self.of("link")]
        if not links:
            raise MissingSection("scenario has no coupling links")
        c = self.one("coupling")
        if c is None:
            return CouplingMap(links)
        return CouplingMap(links, c["heat_rate_mmbtu_per_mwh"], c["energy_density_mmbtu_per_kg"])

    def monitor_config(self) -> MonitorConfig:
        r = self.one("monitor")
        if r is None:
            return MonitorConfig()
        kw = {"mode": r["mode"]}
        for key, attr in (("nca_fixed_cost_usd_per_mw", "nca_fixed_cost"), ("nca_hours", "nca_constrained_hours"),
                          ("cgsfc_cutoff", "cgsfc_cutoff")):
            if r.get(key) is not None:
                kw[attr] = r[key]
        return MonitorConfig(**kw)

    def search_params(self):
        r = self.one("search")
        return {"budget": (r.get("budget") if r else None) or 800,
                "price_cap": (r.get("price_cap_usd_per_mwh") if r else None) or 100.0}

    def coupled_case(self) -> CoupledCase:
        return CoupledCase(self.power_network(), self.power_bids(), self.gas_network(), self.gas_market(),
                           self.coupling_map(), self.monitor_config(), self.search_params()["price_cap"])

    def starts(self) -> Dict[str, Dict[str, FleetBid]]:
        out: Dict[str, Dict[str, FleetBid]] = {}
        for r in self.of("start"):
            out.setdefault(r["label"], {})[r["generator"]] = FleetBid(
                r["power_price_usd_per_mwh"], r["power_max_mw"], r["gas_price_usd_per_mmbtu"], r["gas_max_kgps"])
        return out

    # -- text ------------------------------------------------------------------
    def serialize(self) -> str:
        out = []
        for r in self.records:
            parts = [r.kind] + [f"{k}={_format_value(v)}" for k, v in r.fields]
            out.append(" ".join(parts))
        return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# parsing

_TOKEN = re.compile(r"\S+")


def _tokenize(text):
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield lineno, _TOKEN.findall(line)


def _convert(value, typ):
    if typ is int:
        if not re.fullmatch(r"[+-]?\d+", value):
            raise ValueError(f"expected an integer, got {value!r}")
        return int(value)
    if typ is float:
        x = float(value)
        if not math.isfinite(x):
            raise ValueError(f"expected a finite number, got {value!r}")
        return x
    return value


def parse_scenario(text: str, base_dir=None) -> ScenarioFile:
    """Parse and fully validate a scenario; every problem is reported with its line."""
    records: List[Record] = []
    problems: List[Tuple[int, str]] = []
    for lineno, tokens in _tokenize(text):
        kind = tokens[0]
        if "=" in kind:
            raise ParseError(f"record must start with a kind, got {kind!r}", lineno)
        pairs = []
        seen = set()
        for tok in tokens[1:]:
            if "=" not in tok or tok.startswith("="):
                raise ParseError(f"expected key=value, got {tok!r}", lineno)
            key, value = tok.split("=", 1)
            if key in seen:
                raise ParseError(f"duplicate key {key!r}", lineno)
            seen.add(key)
            pairs.append((key, value))
        schema = SCHEMA.get(kind)
        if schema is None:
            problems.append((lineno, f"unknown record kind {kind!r}"))
            continue
        given = dict(pairs)
        typed = []
        for key in given:
            if key not in schema:
                problems.append((lineno, f"{kind}: unknown key {key!r}"))
        for key, (typ, required) in schema.items():
            if key not in given:
                if required:
                    problems.append((lineno, f"{kind}: missing key {key!r}"))
                continue
            try:
                typed.append((key, _convert(given[key], typ)))
            except ValueError as exc:
                problems.append((lineno, f"{kind}.{key}: {exc}"))
        records.append(Record(kind, tuple(typed), lineno))
    problems += _validate(records, base_dir)
    if problems:
        problems.sort()
        raise ValidationError(problems)
    return ScenarioFile(tuple(records), None if base_dir is None else str(base_dir))


def _validate(records, base_dir):
    problems = []
    by = {}
    for r in records:
        by.setdefault(r.kind, []).append(r)
    for kind in SINGLETONS:
        for extra in by.get(kind, [])[1:]:
            problems.append((extra.line, f"{kind}: record may appear only once"))

    def dupes(kind, key="id"):
        seen = {}
        for r in by.get(kind, []):
            v = r.get(key)
            if v in seen:
                problems.append((r.line, f"{kind}: duplicate id {v!r}"))
            seen[v] = r
        return seen

    imports = {r.get("kind"): r for r in by.get("import", [])}
    for r in by.get("import", []):
        if r.get("kind") not in ("matpower", "gaslib"):
            problems.append((r.line, f"import: kind must be matpower or gaslib, got {r.get('kind')!r}"))
            continue
        try:
            text = _read_fixture_text(r["file"], base_dir)
            if r["kind"] == "matpower":
                net, _ = import_matpower_case(text, modified=r.get("modified") == "ieee14")
                imports["matpower"] = net
            else:
                net, market = import_gaslib_case(text, modified=r.get("modified") == "gaslib11")
                imports["gaslib"] = (net, market)
        except (OSError, UnsupportedCaseFeature, ParseError, ValueError) as exc:
            problems.append((r.line, f"import {r.get('file')!r}: {exc}"))

    buses = dupes("bus")
    bus_ids = set(buses)
    gen_ids = set(dupes("generator"))
    if isinstance(imports.get("matpower"), PowerNetwork):
        bus_ids |= set(imports["matpower"].bus_ids)
        gen_ids |= {g.id for g in imports["matpower"].generators}
    for r in by.get("bus", []):
        if r.get("demand_mw", 0.0) < 0:
            problems.append((r.line, f"bus {r.get('id')}: demand must be nonnegative"))
    for k, r in enumerate(by.get("line", [])):
        for end in ("from", "to"):
            if r.get(end) is not None and r.get(end) not in bus_ids:
                problems.append((r.line, f"line: unknown bus {r.get(end)}"))
        if r.get("reactance_pu") is not None and r["reactance_pu"] <= 0:
            problems.append((r.line, "line: reactance must be positive"))
        if r.get("limit_mw") is not None and r["limit_mw"] <= 0:
            problems.append((r.line, "line: limit must be positive"))
    for r in by.get("generator", []):
        if r.get("bus") is not None and r["bus"] not in bus_ids:
            problems.append((r.line, f"generator {r.get('id')}: unknown bus {r['bus']}"))
        if r.get("pmin_mw") is not None and r.get("pmax_mw") is not None and r["pmin_mw"] > r["pmax_mw"]:
            problems.append((r.line, f"generator {r.get('id')}: pmin above pmax"))
    for r in by.get("bid", []):
        if r.get("generator") not in gen_ids:
            problems.append((r.line, f"bid: unknown generator {r.get('generator')!r}"))

    nodes = dupes("gas_node")
    node_ids = set(nodes)
    part_ids = set(dupes("participant"))
    if imports.get("gaslib") and isinstance(imports["gaslib"], tuple):
        node_ids |= set(imports["gaslib"][0].node_ids)
        part_ids |= {m.id for m in imports["gaslib"][1].participants}
    for r in by.get("gas_node", []):
        lo, hi = r.get("pmin_mpa"), r.get("pmax_mpa")
        if lo is not None and hi is not None and not 0 < lo < hi:
            problems.append((r.line, f"gas_node {r.get('id')}: need 0 < pmin < pmax"))
    dupes("pipe")
    dupes("compressor")
    for r in by.get("pipe", []):
        for end in ("from", "to"):
            if r.get(end) is not None and r.get(end) not in node_ids:
                problems.append((r.line, f"pipe {r.get('id')}: unknown node {r.get(end)}"))
        if r.get("diameter_m") is not None and not r["diameter_m"] > 0:
            problems.append((r.line, f"pipe {r.get('id')}: diameter must be positive, got {r['diameter_m']}"))
        for key in ("length_m", "friction"):
            if r.get(key) is not None and not r[key] > 0:
                problems.append((r.line, f"pipe {r.get('id')}: {key} must be positive"))
    for r in by.get("compressor", []):
        for end in ("from", "to"):
            if r.get(end) is not None and r.get(end) not in node_ids:
                problems.append((r.line, f"compressor {r.get('id')}: unknown node {r.get(end)}"))
        if r.get("alpha_max") is not None and r["alpha_max"] < 1:
            problems.append((r.line, f"compressor {r.get('id')}: alpha_max must be >= 1"))
    for r in by.get("participant", []):
        if r.get("node") is not None and r["node"] not in node_ids:
            problems.append((r.line, f"participant {r.get('id')}: unknown node {r['node']}"))
        if r.get("role") not in (None, "supply", "demand"):
            problems.append((r.line, f"participant {r.get('id')}: role must be supply or demand"))
        if r.get("qmax_kgps") is not None and r["qmax_kgps"] < 0:
            problems.append((r.line, f"participant {r.get('id')}: qmax must be nonnegative"))
    for r in by.get("gas_bid", []):
        if r.get("participant") not in part_ids:
            problems.append((r.line, f"gas_bid: unknown participant {r.get('participant')!r}"))
    linked = set()
    for r in by.get("link", []):
        if r.get("generator") not in gen_ids:
            problems.append((r.line, f"link: unknown generator {r.get('generator')!r}"))
        if r.get("participant") not in part_ids:
            problems.append((r.line, f"link: unknown participant {r.get('participant')!r}"))
        if r.get("generator") in linked:
            problems.append((r.line, f"link: generator {r.get('generator')!r} linked twice"))
        linked.add(r.get("generator"))
    for r in by.get("monitor", []):
        if r.get("mode") not in (None, "formal", "nca", "bca"):
            problems.append((r.line, "monitor: mode must be formal, nca or bca"))
        hours = r.get("nca_hours")
        if hours is not None and not 0 < hours <= 2000:
            problems.append((r.line, "monitor: nca_hours must lie in (0, 2000]"))
        cut = r.get("cgsfc_cutoff")
        if cut is not None and not 0.03 <= cut <= 0.06:
            problems.append((r.line, "monitor: cgsfc_cutoff must lie in [0.03, 0.06]"))
    for r in by.get("start", []):
        if r.get("generator") not in linked:
            problems.append((r.line, f"start: generator {r.get('generator')!r} has no gas link"))
    return problems


# ---------------------------------------------------------------------------
# fixtures


def fixture_dir() -> Path:
    override = os.environ.get(FIXTURE_ENV)
    if override:
        return Path(override)
    return Path(__file__).resolve().parent / "fixtures"


def _read_fixture_text(name, base_dir=None):
    candidates = []
    if base_dir is not None:
        candidates.append(Path(base_dir) / name)
    candidates.append(fixture_dir() / name)
    for path in candidates:
        if path.is_file():
            return path.read_text(encoding="utf-8")
    raise OSError(f"fixture {name!r} not found")


def load_scenario(path) -> ScenarioFile:
    path = Path(path)
    if not path.is_file() and not path.is_absolute():
        alt = fixture_dir() / path
        if alt.is_file():
            path = alt
    return parse_scenario(path.read_text(encoding="utf-8"), base_dir=path.parent)


def load_fixture(name) -> ScenarioFile:
    return load_scenario(fixture_dir() / name)


# ---------------------------------------------------------------------------
# MATPOWER

IEEE14_OVERRIDES = {1: (200.0, 40.0), 2: (140.0, 20.0), 3: (100.0, 25.0), 6: (100.0, 30.0), 8: (100.0, 15.0)}
UNLIMITED_MW = 9999.0


def _matpower_matrix(text, name):
    m = re.search(r"mpc\." + name + r"\s*=\s*\[(.*?)\];", text, re.S)
    if m is None:
        return None
    rows = []
    for line in m.group(1).splitlines():
        line = line.split("%", 1)[0].strip().rstrip(";").strip()
        if line:
            rows.append([float(x) for x in line.replace(",", " ").split()])
    return rows


def import_matpower_case(text: str, modified=False):
    """Restricted MATPOWER case (bus/gen/branch/gencost) -> (PowerNetwork, PowerBidSet).

    Reactances are used as given (per unit), angle-free DC model, taps ignored.
    Branches with rateA = 0 are treated as unlimited.
    """
    bus_rows = _matpower_matrix(text, "bus")
    gen_rows = _matpower_matrix(text, "gen")
    branch_rows = _matpower_matrix(text, "branch")
    cost_rows = _matpower_matrix(text, "gencost")
    for name, rows in (("bus", bus_rows), ("gen", gen_rows), ("branch", branch_rows)):
        if rows is None:
            raise ParseError(f"MATPOWER case has no mpc.{name} matrix")
    buses = [Bus(int(r[0]), r[2]) for r in bus_rows]
    lines = []
    for k, r in enumerate(branch_rows):
        if len(r) > 10 and r[10] == 0:
            continue  # out of service
        if len(r) > 9 and r[9] != 0:
            raise UnsupportedCaseFeature(f"branch {k + 1}: phase shifter (angle {r[9]}) not supported")
        limit = r[5] if r[5] > 0 else UNLIMITED_MW
        lines.append(Line(int(r[0]), int(r[1]), r[3], limit))
    gens = []
    for k, r in enumerate(gen_rows):
        if len(r) > 7 and r[7] <= 0:
            continue
        bus = int(r[0])
        cost = 0.0
        if cost_rows is not None:
            c = cost_rows[k]
            model, n = int(c[0]), int(c[3])
            if model != 2:
                raise UnsupportedCaseFeature(f"gencost row {k + 1}: piecewise-linear costs not supported")
            coeffs = c[4:4 + n]
            if n >= 3 and any(x != 0 for x in coeffs[:n - 2]):
                raise UnsupportedCaseFeature(f"gencost row {k + 1}: quadratic cost term not supported")
            cost = coeffs[-2] if n >= 2 else 0.0
        pmax, pmin = r[8], r[9]
        if modified and bus in IEEE14_OVERRIDES:
            pmax, cost = IEEE14_OVERRIDES[bus]
        gens.append(Generator(f"g{bus}", bus, max(pmin, 0.0), pmax, cost))
    net = PowerNetwork(buses, lines, gens)
    return net, PowerBidSet.reference(net)


# ---------------------------------------------------------------------------
# GasLib

GASLIB11_SUPPLY_CAPS = {6: 10.0, 4: 8.0}
GASLIB11_FRICTION = 0.01
GASLIB11_DIAMETER = 0.3

_PRESSURE = {"bar": 1e5, "MPa": 1e6, "Pa": 1.0}
_LENGTH = {"km": 1e3, "m": 1.0}
_DIAMETER = {"mm": 1e-3, "m": 1.0}


def _local(tag):
    return tag.rsplit("}", 1)[-1].split(":")[-1]


def _child_value(elem, name, units, default=None):
    for c in elem:
        if _local(c.tag) == name:
            unit = c.get("unit", "")
            if units is None:
                return float(c.get("value"))
            if unit not in units:
                raise UnsupportedCaseFeature(f"{elem.get('id')}: unit {unit!r} for {name} not supported")
            return float(c.get("value")) * units[unit]
    if default is None:
        raise ParseError(f"{elem.get('id')}: missing {name}")
    return default


def nikuradse_friction(diameter, roughness):
    return (2.0 * math.log10(diameter / roughness) + 1.138) ** -2


def import_gaslib_case(text: str, modified=False):
    """Restricted GasLib-style XML listing -> (GasNetwork, GasMarket).

    Node ids must be integers. Sources and sinks become supply and demand
    participants ``s<node>`` / ``d<node>``; flows are in kg/s and prices in
    $/MMBtu (``price`` child, default 0). Valves and resistors are rejected.
    """
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        raise ParseError(f"GasLib listing is not well-formed XML: {exc}") from exc
    nodes, pipes, comps, parts = [], [], [], []
    wave = float(root.get("waveSpeed", DEFAULT_WAVE_SPEED))
    for elem in root.iter():
        tag = _local(elem.tag)
        if tag in ("valve", "resistor", "controlValve", "shortPipe"):
            raise UnsupportedCaseFeature(f"{tag} {elem.get('id')!r} is not supported")
        if tag in ("source", "sink", "innode"):
            try:
                nid = int(elem.get("id"))
            except (TypeError, ValueError) as exc:
                raise ParseError(f"node id {elem.get('id')!r} is not an integer") from exc
            lo = _child_value(elem, "pressureMin", _PRESSURE)
            hi = _child_value(elem, "pressureMax", _PRESSURE)
            nodes.append(GasNode(nid, lo, hi))
            if tag != "innode":
                qmax = _child_value(elem, "flowMax", {"kg_per_s": 1.0})
                price = _child_value(elem, "price", None, 0.0)
                role = "supply" if tag == "source" else "demand"
                if modified and role == "supply" and nid in GASLIB11_SUPPLY_CAPS:
                    qmax = GASLIB11_SUPPLY_CAPS[nid]
                parts.append((role, nid, qmax, price))
        elif tag == "pipe":
            length = _child_value(elem, "length", _LENGTH)
            diameter = _child_value(elem, "diameter", _DIAMETER)
            rough = _child_value(elem, "roughness", _DIAMETER, 0.0)
            friction = _child_value(elem, "frictionFactor", None, 0.0)
            if modified:
                diameter, friction = GASLIB11_DIAMETER, GASLIB11_FRICTION
            elif friction == 0.0:
                if rough <= 0:
                    raise ParseError(f"pipe {elem.get('id')}: needs roughness or frictionFactor")
                friction = nikuradse_friction(diameter, rough)
            pipes.append(Pipe(elem.get("id"), int(elem.get("from")), int(elem.get("to")), length, diameter, friction))
        elif tag == "compressorStation":
            comps.append(Compressor(elem.get("id"), int(elem.get("from")), int(elem.get("to")),
                                    _child_value(elem, "pressureRatioMax", None, 1.4),
                                    _child_value(elem, "cost", None, 0.0)))
    net = GasNetwork(nodes, pipes, comps, wave)
    energy = 0.0556
    market = GasMarket([
        Participant(("s" if role == "supply" else "d") + str(nid), nid, role, qmax, price * energy)
        for role, nid, qmax, price in parts
    ])
    return net, market
