import pytest
from hypothesis import given, settings, strategies as st

from coupledmarkets.errors import ParseError, UnsupportedCaseFeature, ValidationError
from coupledmarkets.scenario import (
    FIXTURE_ENV,
    fixture_dir,
    import_gaslib_case,
    import_matpower_case,
    load_fixture,
    load_scenario,
    parse_scenario,
)

BUNDLED = ["three_bus.scn", "coupled_3bus_5node.scn", "ieee14_gaslib11.scn"]


@pytest.mark.parametrize("name", BUNDLED)
def test_bundled_fixtures_are_valid(name):
    scn = load_fixture(name)
    assert scn.name
    scn.power_network().validate()
    if scn.has_gas():
        assert scn.gas_network().nodes
        assert scn.coupling_map().links


def test_three_bus_contents(three_bus):
    net = three_bus.power_network()
    assert [b.demand for b in net.buses] == [40.0, 24.0, 0.0]
    assert [g.reference_cost for g in net.generators] == [30.0, 20.0, 10.0]
    assert three_bus.monitor_config().mode == "formal"


def _text(name):
    return (fixture_dir() / name).read_text()


def test_zero_diameter_names_the_pipe():
    text = _text("coupled_3bus_5node.scn")
    lines = text.splitlines()
    k = next(i for i, l in enumerate(lines) if l.startswith("pipe id=p45"))
    lines[k] = lines[k].replace("diameter_m=0.6", "diameter_m=0.0")
    with pytest.raises(ValidationError) as exc:
        parse_scenario("\n".join(lines))
    assert exc.value.violations == [(k + 1, "pipe p45: diameter must be positive, got 0.0")]


def test_every_violation_is_listed_with_its_line():
    text = "\n".join([
        "scenario name=bad",
        "bus id=1 demand_mw=10",
        "line from=1 to=7 reactance_pu=0.1 limit_mw=5",
        "generator id=g1 bus=1 pmin_mw=0 pmax_mw=oops reference_usd_per_mwh=20",
        "widget id=1",
        "bus id=2 demand_mw=0 colour=red",
    ])
    with pytest.raises(ValidationError) as exc:
        parse_scenario(text)
    lines = sorted(ln for ln, _ in exc.value.violations)
    assert lines == [3, 4, 5, 6]
    assert "7" in dict(exc.value.violations)[3]


@pytest.mark.parametrize("text", ["=1 id=2", "bus id=1 demand_mw", "bus id=1 id=2"])
def test_syntax_errors_carry_line(text):
    with pytest.raises(ParseError) as exc:
        parse_scenario("scenario name=x\n" + text)
    assert exc.value.line == 2


def test_comments_and_blank_lines_are_ignored(three_bus):
    text = "# header\n\n" + three_bus.serialize().replace("\n", "  # trailing\n", 1)
    assert parse_scenario(text).records[0].fields == three_bus.records[0].fields


_pos = st.floats(0.001, 1e4, allow_nan=False, allow_infinity=False)
_name = st.text("abcdefgh_0123456789", min_size=1, max_size=8).filter(lambda s: not s[0].isdigit())


@st.composite
def _scenarios(draw):
    n = draw(st.integers(2, 5))
    recs = [f"scenario name={draw(_name)}"]
    recs += [f"bus id={b} demand_mw={draw(_pos)!r}" for b in range(1, n + 1)]
    for b in range(2, n + 1):
        recs.append(f"line from={draw(st.integers(1, b - 1))} to={b} reactance_pu={draw(_pos)!r} "
                    f"limit_mw={draw(_pos)!r}")
    for k in range(draw(st.integers(1, 3))):
        hi = draw(_pos)
        recs.append(f"generator id=g{k} bus={draw(st.integers(1, n))} pmin_mw=0.0 pmax_mw={hi!r} "
                    f"reference_usd_per_mwh={draw(_pos)!r} owner={draw(_name)}")
    return "\n".join(recs) + "\n"


@settings(max_examples=60)
@given(_scenarios())
def test_serialize_round_trip(text):
    scn = parse_scenario(text)
    again = parse_scenario(scn.serialize())
    assert again.records == scn.records
    assert again.serialize() == scn.serialize()


@pytest.mark.parametrize("name", BUNDLED)
def test_bundled_round_trip(name):
    scn = load_fixture(name)
    assert parse_scenario(scn.serialize()).records == scn.records


def test_matpower_ieee14():
    net, bids = import_matpower_case(_text("case14.m"))
    assert len(net.buses) == 14
    assert len(net.lines) == 20
    assert {g.bus for g in net.generators} == {1, 2, 3, 6, 8}
    mod, _ = import_matpower_case(_text("case14.m"), modified=True)
    g8 = mod.generator("g8")
    assert g8.reference_cost == 15.0
    assert g8.pmax == 100.0


def test_matpower_rejects_quadratic_and_phase_shift():
    text = _text("case14.m")
    quad = text.replace("\t2\t0\t0\t2\t20\t0;", "\t2\t0\t0\t3\t0.01\t20\t0;", 1)
    assert quad != text
    with pytest.raises(UnsupportedCaseFeature):
        import_matpower_case(quad)
    shifted = text.replace("0.05917\t0.0528\t0\t0\t0\t0\t0\t1;", "0.05917\t0.0528\t0\t0\t0\t0\t5\t1;", 1)
    assert shifted != text
    with pytest.raises(UnsupportedCaseFeature, match="phase shifter"):
        import_matpower_case(shifted)


def test_gaslib11():
    net, market = import_gaslib_case(_text("gaslib11.xml"))
    assert len(net.nodes) == 11
    mod, mmarket = import_gaslib_case(_text("gaslib11.xml"), modified=True)
    assert mmarket.participant("s6").max_quantity == 10.0
    assert mmarket.participant("s4").max_quantity == 8.0
    assert all(p.diameter == 0.3 for p in mod.pipes)


def test_gaslib_rejects_valves():
    text = _text("gaslib11.xml").replace("</connections>",
                                         '<valve id="v1" from="1" to="2"/></connections>')
    with pytest.raises(UnsupportedCaseFeature, match="valve"):
        import_gaslib_case(text)


def test_fixture_dir_override(tmp_path, monkeypatch):
    (tmp_path / "mine.scn").write_text(_text("three_bus.scn").replace("demand_mw=40.0", "demand_mw=41.0"))
    monkeypatch.setenv(FIXTURE_ENV, str(tmp_path))
    assert fixture_dir() == tmp_path
    scn = load_scenario("mine.scn")
    assert scn.power_network().buses[0].demand == 41.0
    with pytest.raises(OSError):
        load_fixture("three_bus.scn")
