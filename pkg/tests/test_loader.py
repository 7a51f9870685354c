import json
from decimal import Decimal
from pathlib import Path

import pytest

from dacl.errors import CyclicDependency, ParseError
from dacl.loader import (
    dependency_graph,
    load_contract_file,
    parse_contract,
    serialize_contract,
    validate_contract,
)

BAD = Path(__file__).parent / "data" / "bad"

# file stem -> the designated error code it must produce
REJECTIONS = {
    "range_overlap": "RANGE_OVERLAP",
    "bracket_inverted": "BRACKET_INVERTED",
    "temporal_gap": "TEMPORAL_GAP",
    "temporal_overlap": "TEMPORAL_OVERLAP",
    "open_ended_conflict": "OPEN_ENDED_CONFLICT",
    "unresolved_variable": "UNRESOLVED_VARIABLE",
    "type_mismatch": "TYPE_MISMATCH",
    "dependency_cycle": "DEPENDENCY_CYCLE",
    "forward_step_reference": "FORWARD_STEP_REFERENCE",
    "enum_const_invalid": "ENUM_CONST_INVALID",
    "missing_result_variable": "MISSING_RESULT_VARIABLE",
    "sandbox_violation": "SANDBOX_VIOLATION",
    "duplicate_variable": "DUPLICATE_VARIABLE",
    "const_value_missing": "CONST_VALUE_MISSING",
}


# --- parsing ------------------------------------------------------------------


def test_rejects_wrong_format_version():
    with pytest.raises(ParseError):
        parse_contract('{"dacl_version": "2", "contract_id": "c", "clauses": []}')


def test_rejects_non_json():
    with pytest.raises(ParseError) as exc:
        parse_contract("{not json")
    assert exc.value.line == 1


def test_rejects_bad_identifier():
    doc = {"dacl_version": "1", "contract_id": "Bad-Name", "clauses": []}
    with pytest.raises(ParseError):
        parse_contract(json.dumps(doc))


def test_numbers_parse_as_exact_decimals(fixtures):
    contract, _ = fixtures["logistics_msa"]
    bracket = contract.clauses[0].body.brackets[0]
    assert bracket.min == Decimal("2.00")
    assert isinstance(bracket.min, Decimal)


def test_condition_nesting_depth_is_bounded():
    cond = {"lhs": "x", "op": "=", "rhs": {"decimal": "1"}}
    for _ in range(40):
        cond = {"all": [cond]}
    doc = {
        "dacl_version": "1",
        "contract_id": "deep",
        "variables": [{"name": "x", "source": "external", "type": "decimal"}],
        "clauses": [{"name": "c", "kind": "logical",
                     "logical": {"cases": [{"when": cond, "then": {"text": "y"}}]}}],
    }
    with pytest.raises(ParseError):
        parse_contract(json.dumps(doc))


@pytest.mark.parametrize("fid", ["energy_sup", "muni_ifb", "health_ppo", "logistics_msa"])
def test_serialize_round_trips(fixtures, fid):
    contract, _ = fixtures[fid]
    assert parse_contract(serialize_contract(contract)) == contract


def test_default_rounding_override():
    doc = json.dumps({
        "dacl_version": "1", "contract_id": "c",
        "variables": [{"name": "x", "source": "external", "type": "decimal"}],
        "clauses": [{"name": "p", "kind": "pricing",
                     "pricing": {"result": "t", "steps": [{"target": "t", "expr": "x"}]}}],
    })
    assert parse_contract(doc).clauses[0].body.rounding == "half_up"
    assert parse_contract(doc, default_rounding="half_even").clauses[0].body.rounding == "half_even"
    # explicit rounding in the file is never overridden
    explicit = doc.replace('"result": "t"', '"result": "t", "rounding": "floor"')
    assert parse_contract(explicit, default_rounding="half_even").clauses[0].body.rounding == "floor"
    with pytest.raises(ParseError):
        parse_contract(doc, default_rounding="nearest")


# --- validation: rejection corpus ---------------------------------------------


@pytest.mark.parametrize("stem,code", sorted(REJECTIONS.items()))
def test_rejection_corpus_produces_designated_code(stem, code):
    report = validate_contract(load_contract_file(BAD / f"{stem}.json"))
    assert not report.ok
    assert code in {f.code for f in report.errors}, (
        f"{stem}: expected {code}, got {[f.code for f in report.errors]}"
    )


def test_bracket_gap_without_default_is_a_warning_not_an_error():
    report = validate_contract(load_contract_file(BAD / "coverage_gap.json"))
    assert report.ok  # still deployable
    assert "COVERAGE_GAP" in {f.code for f in report.warnings}


def test_findings_carry_location_paths():
    report = validate_contract(load_contract_file(BAD / "range_overlap.json"))
    finding = next(f for f in report.errors if f.code == "RANGE_OVERLAP")
    assert finding.path.startswith("clauses/0")


@pytest.mark.parametrize("fid", ["energy_sup", "muni_ifb", "health_ppo", "logistics_msa"])
def test_bundled_fixtures_validate_clean(fixtures, fid):
    contract, _ = fixtures[fid]
    report = validate_contract(contract)
    assert report.ok and not report.warnings, report.to_dict()


# --- dependency graph ---------------------------------------------------------


def test_dependency_order_places_reads_first(fixtures):
    contract, _ = fixtures["logistics_msa"]
    order = dependency_graph(contract)
    assert order.index("fsc_table") < order.index("linehaul_rate")


def test_intra_clause_formula_cycle_detected():
    doc = {
        "dacl_version": "1", "contract_id": "c",
        "variables": [],
        "clauses": [{"name": "p", "kind": "pricing", "pricing": {
            "result": "a",
            "steps": [{"target": "a", "expr": "b + 1"}, {"target": "b", "expr": "a + 1"}],
        }}],
    }
    with pytest.raises(CyclicDependency) as exc:
        dependency_graph(parse_contract(json.dumps(doc)))
    assert set(exc.value.cycle) >= {"a", "b"}


def test_cross_clause_cycle_detected():
    report = validate_contract(load_contract_file(BAD / "dependency_cycle.json"))
    message = next(f for f in report.errors if f.code == "DEPENDENCY_CYCLE").message
    assert "alpha" in message and "beta" in message
