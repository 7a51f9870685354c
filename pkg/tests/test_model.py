import datetime
from decimal import Decimal

import pytest

from dacl.errors import DuplicateVariable, UnknownClause
from dacl.model import (
    Clause,
    ContractDefinition,
    PricingFormula,
    SubFormula,
    VariableDecl,
    declared_variables,
    format_value,
    value_type_of,
    version_chain,
)


def _pricing(name, start=None, end=None):
    return Clause(
        name=name,
        kind="pricing",
        body=PricingFormula(sub_formulas=(SubFormula("t", "x"),), result_variable="t"),
        validity_start_date=start,
        validity_end_date=end,
    )


def test_value_type_of_distinguishes_bool_from_decimal():
    assert value_type_of(True) == "boolean"
    assert value_type_of(Decimal("1")) == "decimal"
    assert value_type_of("a") == "text"
    assert value_type_of(datetime.date(2024, 1, 1)) == "date"
    with pytest.raises(TypeError):
        value_type_of(1.5)  # binary floats are not contract values


def test_format_value_never_uses_exponent_notation():
    assert format_value(Decimal("1E+3")) == "1000"
    assert format_value(Decimal("2.5E-4")) == "0.00025"
    assert format_value(Decimal("13.10")) == "13.10"  # trailing zero preserved
    assert format_value(True) == "true"
    assert format_value(datetime.date(2025, 2, 1)) == "2025-02-01"


def test_declared_variables_rejects_duplicates():
    decl = VariableDecl(name="x", source="external", value_type="decimal")
    contract = ContractDefinition("c", (decl, decl), (_pricing("p"),))
    with pytest.raises(DuplicateVariable):
        declared_variables(contract)


def test_version_chain_sorted_with_undated_first():
    v_open = _pricing("fee")
    v1 = _pricing("fee", start=datetime.date(2024, 1, 1), end=datetime.date(2024, 12, 31))
    v2 = _pricing("fee", start=datetime.date(2023, 1, 1), end=datetime.date(2023, 12, 31))
    contract = ContractDefinition("c", (), (v1, v_open, v2))
    assert version_chain(contract, "fee") == [v_open, v2, v1]
    with pytest.raises(UnknownClause):
        version_chain(contract, "nope")


def test_active_on_window_bounds_inclusive():
    clause = _pricing(
        "fee", start=datetime.date(2024, 1, 1), end=datetime.date(2024, 12, 31)
    )
    assert clause.active_on(datetime.date(2024, 1, 1))
    assert clause.active_on(datetime.date(2024, 12, 31))
    assert not clause.active_on(datetime.date(2023, 12, 31))
    assert not clause.active_on(datetime.date(2025, 1, 1))
    assert clause.window() == "2024-01-01..2024-12-31"


def test_clause_names_preserves_declaration_order():
    contract = ContractDefinition(
        "c", (), (_pricing("b"), _pricing("a"), _pricing("b"))
    )
    assert contract.clause_names() == ["b", "a"]
