import datetime
import json
import subprocess
import sys
from decimal import Decimal

import pytest

from dacl.engine import EvaluationRequest, evaluate_clauses
from dacl.errors import UnreachableState
from dacl.loader import parse_contract
from dacl.testkit import (
    ORACLES,
    EventRecord,
    FixtureManifest,
    OracleGap,
    concordance,
    generate_events,
    oracle_expected,
    state_targets,
)

D = Decimal
JAN = datetime.date(2025, 1, 15)


# --- oracle independence ------------------------------------------------------


def test_oracles_import_nothing_from_the_engine():
    """The gold oracles must not share code with the evaluator: importing
    them in a clean interpreter must not load the loader/expr/engine
    modules."""
    import dacl.testkit.oracles as oracles_mod

    code = (
        "import importlib.util, sys; "
        f"spec = importlib.util.spec_from_file_location('standalone_oracles', {oracles_mod.__file__!r}); "
        "mod = importlib.util.module_from_spec(spec); "
        "sys.modules['standalone_oracles'] = mod; "
        "spec.loader.exec_module(mod); "
        "loaded = [m for m in sys.modules if m.startswith('dacl')]; "
        "print(','.join(loaded) or 'CLEAN')"
    )
    out = subprocess.run(
        [sys.executable, "-c", code], capture_output=True, text=True, check=True
    )
    assert out.stdout.strip() == "CLEAN", f"oracles pulled in: {out.stdout}"


# --- oracle spot checks -------------------------------------------------------


def test_logistics_oracle_diesel_anchor_points():
    oracle = ORACLES["logistics_msa"]
    for price, pct in (("2.05", 1), ("4.15", 22), ("4.55", 27), ("6.65", 48),
                       ("6.75", 49), ("6.85", 50)):
        facts = {"diesel_price": price, "service_type": "local", "equipment_type": "van",
                 "miles": "30", "extra_stops": "0", "weight": "0.3"}
        assert oracle.evaluate(facts, JAN)["fsc_table"] == D(pct), price


def test_muni_oracle_rates_by_year():
    oracle = ORACLES["muni_ifb"]
    facts = {"service_units": "100"}
    assert oracle.evaluate(facts, datetime.date(2023, 7, 1))["invoice_total"] == D("1275.00")
    assert oracle.evaluate(facts, datetime.date(2024, 7, 1))["invoice_total"] == D("1335.00")
    assert oracle.evaluate(facts, datetime.date(2026, 7, 1))["invoice_total"] == D("1400.00")
    with pytest.raises(OracleGap):
        oracle.evaluate(facts, datetime.date(2022, 7, 1))


def test_health_oracle_branch_outcomes():
    oracle = ORACLES["health_ppo"]
    base = {"age": "30", "relationship": "self", "transport_mode": "ground",
            "emergency": "true", "medically_necessary": "true",
            "admitted": "false", "deductible_met": "false"}
    assert oracle.evaluate(base, JAN)["coverage_determination"] == "covered_standard_cost_sharing"
    assert oracle.evaluate({**base, "emergency": "false"}, JAN)[
        "coverage_determination"] == "denied_routine_transport"
    assert oracle.evaluate({**base, "medically_necessary": "false"}, JAN)[
        "coverage_determination"] == "denied_not_medically_necessary"


def test_energy_oracle_formula():
    oracle = ORACLES["energy_sup"]
    facts = {"regional_gas_index": "6.0", "conversion_factor": "2.0",
             "supplier_margin": "1.0", "rebate_per_unit": "0.5", "freight_per_unit": "0.25"}
    assert oracle.evaluate(facts, JAN)["price_per_unit"] == D("4.75")
    with pytest.raises(OracleGap):
        oracle.evaluate({**facts, "conversion_factor": "0"}, JAN)


# --- event generation ---------------------------------------------------------


def _lines(events):
    return [e.to_json_line() for e in events]


@pytest.mark.parametrize("fid", ["energy_sup", "muni_ifb", "health_ppo", "logistics_msa"])
def test_generation_is_deterministic_per_seed(fixtures, fid):
    contract, manifest = fixtures[fid]
    a = _lines(generate_events(contract, manifest, seed=11))
    b = _lines(generate_events(contract, manifest, seed=11))
    c = _lines(generate_events(contract, manifest, seed=12))
    assert a == b
    assert a != c


def test_every_state_gets_an_event(logistics):
    contract, manifest = fixtures_pair = logistics
    events = generate_events(contract, manifest, seed=3)
    targets = state_targets(contract)
    assert len(targets) == 76
    # each bracket also gets two boundary-pinned events
    assert len(events) == 76 + 2 * 48


def test_bracket_boundary_events_pin_min_and_max(logistics):
    contract, manifest = logistics
    events = generate_events(contract, manifest, seed=3)
    prices = {e.facts["diesel_price"] for e in events}
    for boundary in ("2.000", "2.099", "4.449", "4.450", "6.699"):
        assert boundary in prices, boundary


def test_total_mode_produces_exact_count_covering_all_states(health):
    contract, manifest = health
    events = generate_events(contract, manifest, seed=5, total=100)
    assert len(events) == 100
    assert len({e.event_id for e in events}) == 100
    with pytest.raises(UnreachableState):
        generate_events(contract, manifest, seed=5, total=3)  # below state count


def test_unreachable_state_declared_in_manifest_is_skipped(health):
    contract, manifest = health
    import dataclasses

    trimmed = dataclasses.replace(
        manifest, unreachable_states={"coverage_determination": ("case:4",)}
    )
    events = generate_events(contract, trimmed, seed=5)
    assert len(events) == 4


def test_impossible_state_raises_unreachable():
    contract = parse_contract(json.dumps({
        "dacl_version": "1", "contract_id": "imp",
        "variables": [{"name": "x", "source": "external", "type": "decimal"}],
        "clauses": [{"name": "decide", "kind": "logical", "logical": {
            "cases": [{"when": {"all": [
                {"lhs": "x", "op": ">", "rhs": {"decimal": "5"}},
                {"lhs": "x", "op": "<", "rhs": {"decimal": "3"}},
            ]}, "then": {"text": "never"}}],
            "default": {"text": "always"},
        }}],
    }))
    manifest = FixtureManifest(
        contract_id="imp", contract_file="imp.json", oracle="none",
        clause_names=("decide",),
        date_range=(datetime.date(2025, 1, 1), datetime.date(2025, 12, 31)),
        domains={"x": {"min": "0", "max": "10", "scale": 0}},
    )
    with pytest.raises(UnreachableState):
        generate_events(contract, manifest, seed=1)


def test_event_jsonl_round_trip(energy):
    contract, manifest = energy
    events = oracle_expected(ORACLES["energy_sup"], generate_events(contract, manifest, seed=9))
    for event in events:
        restored = EventRecord.from_json_line(event.to_json_line())
        assert restored == event
        assert isinstance(restored.expected["price_per_unit"], Decimal)


def test_oracle_expected_rejects_foreign_events(energy):
    contract, manifest = energy
    events = generate_events(contract, manifest, seed=9)
    with pytest.raises(OracleGap):
        oracle_expected(ORACLES["muni_ifb"], events)


def test_generated_events_respect_version_windows(muni):
    contract, manifest = muni
    events = generate_events(contract, manifest, seed=21, count_per_state=5)
    oracle = ORACLES["muni_ifb"]
    for event in events:
        # the oracle accepts every generated date: no event falls outside
        # all fee-schedule windows
        oracle.evaluate(event.facts, event.evaluation_date)


# --- concordance --------------------------------------------------------------


def test_concordance_exact_match_and_missing_clause():
    verdict = concordance({"a": D("1.00")}, {"a": D("1.00"), "b": D("2")})
    assert not verdict.matched
    assert [d.clause for d in verdict.diffs] == ["b"]
    assert verdict.diffs[0].actual is None


def test_concordance_tolerance_applies_to_decimals_only():
    assert concordance({"a": D("1.004")}, {"a": D("1.000")}, D("0.01")).matched
    assert not concordance({"a": D("1.02")}, {"a": D("1.00")}, D("0.01")).matched
    assert not concordance({"a": "1.00"}, {"a": D("1.00")}, D("1")).matched  # text != decimal


def test_concordance_reports_numeric_delta():
    verdict = concordance({"a": D("3.35")}, {"a": D("3.33")})
    assert verdict.diffs[0].delta == "0.02"


# --- end to end: engine vs oracle on one seeded batch -------------------------


@pytest.mark.parametrize("fid", ["energy_sup", "muni_ifb", "health_ppo", "logistics_msa"])
def test_engine_matches_oracle_on_generated_events(fixtures, fid):
    contract, manifest = fixtures[fid]
    events = oracle_expected(ORACLES[fid], generate_events(contract, manifest, seed=77))
    for event in events:
        result = evaluate_clauses(
            contract,
            EvaluationRequest(event.clause_names, dict(event.facts), event.evaluation_date),
        )
        verdict = concordance(result.outputs, event.expected)
        assert verdict.matched, (event.event_id, verdict.to_dict())
