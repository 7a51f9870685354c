import datetime
import json
from decimal import Decimal

import pytest

from dacl.audit import canonical_serialize
from dacl.engine import (
    EvaluationRequest,
    coerce_value,
    evaluate_clauses,
    select_active_version,
)
from dacl.errors import (
    CyclicDependency,
    EnumViolation,
    MissingVariable,
    NoActiveVersion,
    NoMatchingBracket,
    NoMatchingCase,
    TypeMismatch,
    UnknownClause,
    UnknownVariable,
)
from dacl.loader import parse_contract
from dacl.model import VariableDecl

D = Decimal
JAN = datetime.date(2025, 1, 15)


def contract_of(doc: dict):
    base = {"dacl_version": "1", "contract_id": "t", "variables": [], "clauses": []}
    base.update(doc)
    return parse_contract(json.dumps(base))


def run(contract, clauses, facts, date=JAN):
    return evaluate_clauses(
        contract, EvaluationRequest(tuple(clauses), facts, date)
    )


# --- fact coercion ------------------------------------------------------------


def _decl(value_type, enum=None):
    return VariableDecl(
        name="x", source="external", value_type=value_type,
        description="d", enum_values=enum,
    )


def test_coerce_decimal_from_string_int_and_decimal():
    assert coerce_value("x", "4.50", _decl("decimal")) == D("4.50")
    assert coerce_value("x", 7, _decl("decimal")) == D(7)
    assert coerce_value("x", D("1.5"), _decl("decimal")) == D("1.5")


def test_coerce_rejects_non_numeric_string_with_exact_message():
    with pytest.raises(TypeMismatch) as exc:
        coerce_value("x", "abc", _decl("decimal"))
    assert exc.value.message == "Variable x must be a number, got string 'abc'."


def test_coerce_rejects_boolean_for_decimal():
    with pytest.raises(TypeMismatch) as exc:
        coerce_value("x", True, _decl("decimal"))
    assert exc.value.message == "Variable x must be a number, got boolean 'true'."


def test_coerce_date_and_boolean_forms():
    assert coerce_value("x", "2025-06-01", _decl("date")) == datetime.date(2025, 6, 1)
    assert coerce_value("x", "true", _decl("boolean")) is True
    assert coerce_value("x", False, _decl("boolean")) is False
    with pytest.raises(TypeMismatch):
        coerce_value("x", "2025-13-01", _decl("date"))
    with pytest.raises(TypeMismatch):
        coerce_value("x", "yes", _decl("boolean"))


def test_enum_violation_lists_sorted_values():
    with pytest.raises(EnumViolation) as exc:
        coerce_value("x", "train", _decl("text", enum=("ground", "air")))
    assert exc.value.message == (
        "Variable x has invalid value 'train'. Valid values: air, ground."
    )


def test_unknown_fact_is_strict_by_default(energy):
    contract, _ = energy
    facts = {
        "regional_gas_index": "6.0", "conversion_factor": "2.0",
        "supplier_margin": "1.0", "rebate_per_unit": "0.5",
        "freight_per_unit": "0.25", "bogus": "1",
    }
    with pytest.raises(UnknownVariable):
        run(contract, ["price_per_unit"], facts)
    result = evaluate_clauses(
        contract,
        EvaluationRequest(("price_per_unit",), facts, JAN),
        strict_facts=False,
    )
    assert result.outputs["price_per_unit"] == D("4.75")


def test_missing_variable_message_names_clause_and_declaration(energy):
    contract, _ = energy
    with pytest.raises(MissingVariable) as exc:
        run(contract, ["price_per_unit"], {"regional_gas_index": "6.0"})
    assert exc.value.message == (
        "Variable conversion_factor required for clause price_per_unit. "
        "Expected: decimal - MMBtu per delivered unit conversion factor."
    )


# --- temporal versioning ------------------------------------------------------


def test_version_selected_either_side_of_boundary(muni):
    contract, _ = muni
    facts = {"service_units": "100"}
    before = run(contract, ["invoice_total"], facts, datetime.date(2023, 12, 31))
    after = run(contract, ["invoice_total"], facts, datetime.date(2024, 1, 1))
    assert before.outputs["invoice_total"] == D("1275.00")  # 100 * 12.50 + 25
    assert after.outputs["invoice_total"] == D("1335.00")  # 100 * 13.10 + 25
    assert {p.version for p in before.trail.execution_path} == {"2023-01-01..2023-12-31"}
    assert {p.version for p in after.trail.execution_path} == {"2024-01-01..2024-12-31"}


def test_no_active_version_before_first_window(muni):
    contract, _ = muni
    with pytest.raises(NoActiveVersion):
        run(contract, ["invoice_total"], {"service_units": "1"}, datetime.date(2022, 6, 1))
    with pytest.raises(NoActiveVersion):
        select_active_version(contract, "invoice_total", datetime.date(2022, 6, 1))


def test_open_ended_latest_version_covers_far_future(muni):
    contract, _ = muni
    result = run(contract, ["invoice_total"], {"service_units": "10"},
                 datetime.date(2031, 7, 4))
    assert result.outputs["invoice_total"] == D("162.50")  # 10 * 13.75 + 25


# --- range clauses ------------------------------------------------------------


def test_bracket_bounds_are_inclusive(logistics):
    contract, _ = logistics
    for price, pct in (("2.00", "1"), ("2.099", "1"), ("6.60", "48"), ("6.699", "48")):
        result = run(contract, ["fsc_table"], {"diesel_price": price})
        assert result.outputs["fsc_table"] == D(pct), price


def test_above_top_extrapolation(logistics):
    contract, _ = logistics
    for price, pct in (("6.70", "49"), ("6.75", "49"), ("6.80", "50"), ("6.85", "50")):
        result = run(contract, ["fsc_table"], {"diesel_price": price})
        assert result.outputs["fsc_table"] == D(pct), price


def test_range_default_below_table(logistics):
    contract, _ = logistics
    result = run(contract, ["fsc_table"], {"diesel_price": "1.50"})
    assert result.outputs["fsc_table"] == D("0")
    assert result.trail.decision_points[0].matched == "default"


def test_no_matching_bracket_without_default():
    contract = contract_of({
        "variables": [{"name": "x", "source": "external", "type": "decimal"}],
        "clauses": [{"name": "tier", "kind": "range", "range": {
            "input": "x", "boundary_scale": 0,
            "brackets": [{"min": 0, "max": 10, "output": {"decimal": "1"}}],
        }}],
    })
    with pytest.raises(NoMatchingBracket):
        run(contract, ["tier"], {"x": "11"})


# --- logical clauses ----------------------------------------------------------


def test_first_match_wins_in_declaration_order(health):
    contract, _ = health
    facts = {
        "age": "5", "relationship": "child", "transport_mode": "air",
        "emergency": "true", "medically_necessary": "true",
        "admitted": "true", "deductible_met": "false",
    }
    # facts satisfy both case 0 and case 1; case 0 must win
    result = run(contract, ["coverage_determination"], facts)
    assert result.outputs["coverage_determination"] == "covered_in_full_with_admission"
    assert result.trail.decision_points[0].matched == "case:0"


def test_no_matching_case_without_default():
    contract = contract_of({
        "variables": [{"name": "x", "source": "external", "type": "decimal"}],
        "clauses": [{"name": "decide", "kind": "logical", "logical": {"cases": [
            {"when": {"lhs": "x", "op": ">", "rhs": {"decimal": "0"}},
             "then": {"text": "pos"}}]}}],
    })
    with pytest.raises(NoMatchingCase):
        run(contract, ["decide"], {"x": "-1"})


def test_logical_default_output():
    contract = contract_of({
        "variables": [{"name": "x", "source": "external", "type": "decimal"}],
        "clauses": [{"name": "decide", "kind": "logical", "logical": {
            "cases": [{"when": {"lhs": "x", "op": ">", "rhs": {"decimal": "0"}},
                       "then": {"text": "pos"}}],
            "default": {"text": "other"}}}],
    })
    result = run(contract, ["decide"], {"x": "-1"})
    assert result.outputs["decide"] == "other"
    assert result.trail.decision_points[0].matched == "default"


def test_lazy_cross_clause_read_is_memoized(logistics):
    contract, _ = logistics
    facts = {
        "diesel_price": "4.15", "service_type": "linehaul", "equipment_type": "van",
        "weight": "0.4", "miles": "100", "extra_stops": "1",
    }
    result = run(contract, ["linehaul_rate"], facts)
    # 100 * 2.15 * 1.22 + 100 = 362.30
    assert result.outputs["linehaul_rate"] == D("362.30")
    # fsc_table was pulled in lazily: exactly one range decision recorded
    range_points = [d for d in result.trail.decision_points if d.kind == "range"]
    assert len(range_points) == 1 and range_points[0].matched == "bracket:p22"


# --- procedures, terminals, consts --------------------------------------------


PROCEDURE = {
    "variables": [
        {"name": "x", "source": "external", "type": "decimal", "description": "input"},
        {"name": "surcharge", "source": "const", "type": "decimal",
         "description": "flat surcharge", "value": {"decimal": "5"}},
    ],
    "clauses": [{"name": "quote", "kind": "procedure", "procedure": {"steps": [
        {"name": "gate", "terminal_on_output": True, "logical": {"cases": [
            {"when": {"lhs": "x", "op": "<", "rhs": {"decimal": "0"}},
             "then": {"terminal": {"decimal": "0"}}},
        ], "default": {"decimal": "1"}}},
        {"name": "amount", "pricing": {"result": "amount_value", "precision": 2, "steps": [
            {"target": "amount_value", "expr": "x * 2 + surcharge"}]}},
    ]}}],
}


def test_procedure_runs_steps_in_order_and_exposes_last():
    contract = contract_of(PROCEDURE)
    result = run(contract, ["quote"], {"x": "10"})
    assert result.outputs["quote"] == D("25.00")
    assert [p.step for p in result.trail.execution_path] == ["gate", "amount"]


def test_terminal_output_halts_remaining_steps():
    contract = contract_of(PROCEDURE)
    result = run(contract, ["quote"], {"x": "-3"})
    assert result.outputs["quote"] == D("0")
    assert [p.step for p in result.trail.execution_path] == ["gate"]


def test_const_injection_recorded_in_trail():
    contract = contract_of(PROCEDURE)
    result = run(contract, ["quote"], {"x": "1"})
    state = next(s for s in result.trail.variable_states if s.name == "surcharge")
    assert (state.outcome, state.coerced, state.raw) == ("injected", "5", None)


def test_windowed_const_selected_by_evaluation_date():
    contract = contract_of({
        "variables": [
            {"name": "rate", "source": "const", "type": "decimal", "validity": [
                {"value": {"decimal": "10"}, "start": "2024-01-01", "end": "2024-12-31"},
                {"value": {"decimal": "12"}, "start": "2025-01-01", "end": None},
            ]},
        ],
        "clauses": [{"name": "fee", "kind": "pricing", "pricing": {
            "result": "t", "precision": 0, "steps": [{"target": "t", "expr": "rate"}]}}],
    })
    assert run(contract, ["fee"], {}, datetime.date(2024, 6, 1)).outputs["fee"] == D(10)
    assert run(contract, ["fee"], {}, datetime.date(2025, 6, 1)).outputs["fee"] == D(12)
    with pytest.raises(NoActiveVersion):
        run(contract, ["fee"], {}, datetime.date(2023, 6, 1))


# --- pricing formulas ---------------------------------------------------------


def test_intermediates_unrounded_final_quantized(energy):
    contract, _ = energy
    facts = {"regional_gas_index": "10", "conversion_factor": "3",
             "supplier_margin": "0", "rebate_per_unit": "0", "freight_per_unit": "0"}
    result = run(contract, ["price_per_unit"], facts)
    # 10/3 kept at full precision internally, only the result is 2-place
    assert result.outputs["price_per_unit"] == D("3.33")
    steps = {f.target: f for f in result.trail.formula_breakdown}
    assert steps["base_energy_cost"].rounding == "-"
    assert steps["base_energy_cost"].value.startswith("3.33333333333")
    assert steps["unit_price"].rounding == "2:half_up"


def test_result_variable_not_last_step_is_still_rounded():
    contract = contract_of({
        "variables": [{"name": "x", "source": "external", "type": "decimal"}],
        "clauses": [{"name": "p", "kind": "pricing", "pricing": {
            "result": "main", "precision": 2, "steps": [
                {"target": "main", "expr": "x / 3"},
                {"target": "aux", "expr": "x * 2"},
            ]}}],
    })
    result = run(contract, ["p"], {"x": "10"})
    assert result.outputs["p"] == D("3.33")


# --- request validation and failure behavior ----------------------------------


def test_request_rejects_empty_and_duplicate_clause_sets():
    with pytest.raises(UnknownClause):
        EvaluationRequest((), {}, JAN)
    with pytest.raises(UnknownClause):
        EvaluationRequest(("a", "a"), {}, JAN)


def test_unknown_requested_clause(energy):
    contract, _ = energy
    with pytest.raises(UnknownClause):
        run(contract, ["nope"], {})


def test_runtime_cycle_detected_with_cycle_path():
    contract = contract_of({
        "clauses": [
            {"name": "alpha", "kind": "logical",
             "logical": {"cases": [{"when": {"lhs": {"boolean": True}, "op": "=",
                                             "rhs": {"boolean": True}},
                                    "then": {"clause": "beta"}}]}},
            {"name": "beta", "kind": "logical",
             "logical": {"cases": [{"when": {"lhs": {"boolean": True}, "op": "=",
                                             "rhs": {"boolean": True}},
                                    "then": {"clause": "alpha"}}]}},
        ],
    })
    with pytest.raises(CyclicDependency) as exc:
        run(contract, ["alpha"], {})
    assert exc.value.cycle[0] == exc.value.cycle[-1] == "alpha"


def test_raised_error_carries_partial_trail(logistics):
    contract, _ = logistics
    with pytest.raises(MissingVariable) as exc:
        run(contract, ["linehaul_rate"], {"service_type": "local", "miles": "30"})
    trail = exc.value.trail
    assert trail is not None
    assert any(s.name == "service_type" for s in trail.variable_states)


# --- determinism (unit-scale; the acceptance suite does 1000x) ----------------


def test_identical_requests_identical_canonical_trails(logistics):
    contract, _ = logistics
    facts = {
        "diesel_price": "6.85", "service_type": "oversized", "equipment_type": "reefer",
        "weight": "0.6", "miles": "250", "extra_stops": "2",
    }
    blobs = {
        canonical_serialize(run(contract, ["fsc_table", "linehaul_rate"], facts).trail)
        for _ in range(25)
    }
    assert len(blobs) == 1
