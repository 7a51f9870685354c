import datetime
from decimal import Decimal
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from dacl.errors import (
    CalculationError,
    ParseError,
    SandboxViolation,
    TypeMismatch,
)
from dacl.expr import (
    Binary,
    Call,
    Literal,
    Variable,
    compare_values,
    evaluate_condition,
    evaluate_expression,
    expression_variables,
    parse_expression,
)
from dacl.model import AllOf, AnyOf, Comparison, VarRef

from reference_eval import Unsupported, mp_eval, quantized, rational_eval


def ev(text, precision=None, rounding="half_up", **bindings):
    values = {k: Decimal(str(v)) for k, v in bindings.items()}
    value, _ = evaluate_expression(
        parse_expression(text), values.__getitem__, precision=precision, rounding=rounding
    )
    return value


# --- parsing ------------------------------------------------------------------


def test_precedence_mul_over_add():
    assert ev("2 + 3 * 4") == 12 + 2


def test_power_right_associative():
    assert ev("2 ^ 3 ^ 2") == Decimal(2) ** 9


def test_unary_minus_binds_tighter_than_power():
    assert ev("-2 ^ 2") == 4


def test_parentheses_override():
    assert ev("(2 + 3) * 4") == 20


def test_nested_calls_and_args():
    assert ev("round(x / 3, 2)", x=10) == Decimal("3.33")
    assert ev("ceil(2.1) + floor(2.9)") == 5


def test_expression_variables_in_order():
    expr = parse_expression("b + a * b + ceil(c)")
    assert expression_variables(expr) == ["b", "a", "c"]


@pytest.mark.parametrize("text", ["2 +", "* 3", "ceil(((", "2..5", "a b", "()"])
def test_malformed_expressions_raise_parse_error(text):
    with pytest.raises(ParseError):
        parse_expression(text)


# --- sandbox ------------------------------------------------------------------


def test_unknown_function_is_a_sandbox_violation():
    with pytest.raises(SandboxViolation):
        parse_expression("system(x)")
    with pytest.raises(SandboxViolation):
        parse_expression("eval(1)")


def test_sandbox_has_no_attribute_or_string_syntax():
    for text in ("a.b", "__import__(1)", "'x'", 'f"{a}"', "a[0]"):
        with pytest.raises((ParseError, SandboxViolation)):
            parse_expression(text)


def test_call_node_constructor_enforces_whitelist():
    with pytest.raises(SandboxViolation):
        Call("getattr", (Literal(Decimal(1)),))
    with pytest.raises(ParseError):
        Call("sqrt", (Literal(Decimal(1)), Literal(Decimal(2))))  # wrong arity


# --- arithmetic faults --------------------------------------------------------


def test_division_by_zero():
    with pytest.raises(CalculationError):
        ev("1 / x", x=0)


def test_fractional_exponent_rejected():
    with pytest.raises(CalculationError):
        ev("2 ^ 0.5")


def test_huge_exponent_rejected():
    with pytest.raises(CalculationError):
        ev("2 ^ 1001")


def test_sqrt_and_log_domain_checks():
    with pytest.raises(CalculationError):
        ev("sqrt(0 - 1)")
    with pytest.raises(CalculationError):
        ev("log(0)")


def test_non_decimal_variable_in_expression():
    with pytest.raises(TypeMismatch):
        evaluate_expression(parse_expression("x + 1"), {"x": "text"}.__getitem__)
    with pytest.raises(TypeMismatch):
        evaluate_expression(parse_expression("x + 1"), {"x": True}.__getitem__)


# --- rounding -----------------------------------------------------------------


@pytest.mark.parametrize(
    "mode,value,expected",
    [
        ("half_up", "2.5", "3"),
        ("half_down", "2.5", "2"),
        ("half_even", "2.5", "2"),
        ("half_even", "3.5", "4"),
        ("floor", "-2.1", "-3"),
        ("ceiling", "-2.1", "-2"),
        ("down", "-2.9", "-2"),
        ("up", "2.1", "3"),
    ],
)
def test_rounding_modes(mode, value, expected):
    assert ev("x", precision=0, rounding=mode, x=value) == Decimal(expected)


def test_round_function_uses_clause_rounding_mode():
    assert ev("round(x)", rounding="half_up", x="0.5") == 1
    assert ev("round(x)", rounding="half_even", x="0.5") == 0
    assert ev("round(x, 1)", x="0.25") == Decimal("0.3")


def test_inputs_read_are_reported():
    _, inputs = evaluate_expression(
        parse_expression("a * b + a"),
        {"a": Decimal(2), "b": Decimal(3), "c": Decimal(9)}.__getitem__,
    )
    assert inputs == {"a": Decimal(2), "b": Decimal(3)}


# --- agreement with the independent reference ---------------------------------

_literals = st.decimals(
    min_value=-999, max_value=999, places=2, allow_nan=False, allow_infinity=False
)


@st.composite
def _rational_exprs(draw, depth=0):
    if depth >= 3 or draw(st.booleans()):
        if draw(st.booleans()):
            return Literal(draw(_literals))
        return Variable(draw(st.sampled_from(["a", "b", "c"])))
    op = draw(st.sampled_from(["+", "-", "*", "/"]))
    return Binary(
        op, draw(_rational_exprs(depth=depth + 1)), draw(_rational_exprs(depth=depth + 1))
    )


@given(
    expr=_rational_exprs(),
    a=_literals,
    b=_literals,
    c=_literals,
)
@settings(max_examples=300, deadline=None)
def test_rational_arithmetic_matches_fraction_reference(expr, a, b, c):
    bindings = {"a": a, "b": b, "c": c}
    try:
        reference = quantized(expr, bindings, places=6)
    except ZeroDivisionError:
        with pytest.raises(CalculationError):
            evaluate_expression(
                expr, {k: Decimal(v) for k, v in bindings.items()}.__getitem__, precision=6
            )
        return
    value, _ = evaluate_expression(
        expr, {k: Decimal(v) for k, v in bindings.items()}.__getitem__, precision=6
    )
    assert value == reference


@given(
    x=st.decimals(min_value="0.01", max_value=500, places=2, allow_nan=False),
    fn=st.sampled_from(["sqrt", "exp", "log"]),
)
@settings(max_examples=100, deadline=None)
def test_irrational_functions_match_mpmath(x, fn):
    if fn == "exp":
        # keep e^x within 50 significant digits at 20 decimal places
        x = x % Decimal(25) + 1
    value = ev(f"{fn}(x)", precision=20, x=x)
    reference = mp_eval(f"{fn}(x)", {"x": x})
    assert abs(Fraction(str(value)) - Fraction(str(reference))) <= Fraction(1, 10**19)


def test_reference_round_modes_agree_with_engine_on_ties():
    for mode in ("half_up", "half_down", "half_even", "floor", "ceiling", "down", "up"):
        for raw in ("2.345", "-2.345", "0.005", "-0.005", "1.115"):
            engine_value = ev("x", precision=2, rounding=mode, x=raw)
            ref = quantized("x", {"x": raw}, places=2, rounding=mode)
            assert engine_value == ref, (mode, raw)


def test_rational_eval_rejects_irrational_functions():
    with pytest.raises(Unsupported):
        rational_eval("sqrt(x)", {"x": 2})


# --- conditions ---------------------------------------------------------------


def _lookup(**values):
    coerced = {
        k: Decimal(str(v)) if isinstance(v, (int, float)) and not isinstance(v, bool) else v
        for k, v in values.items()
    }
    return coerced.__getitem__


def test_compare_values_type_rules():
    assert compare_values(Decimal(2), "<", Decimal(3))
    assert compare_values("a", "!=", "b")
    assert compare_values(datetime.date(2024, 1, 1), "<=", datetime.date(2024, 1, 1))
    with pytest.raises(TypeMismatch):
        compare_values(Decimal(2), "<", "3")  # ordering needs same type
    with pytest.raises(TypeMismatch):
        compare_values("x", ">", "y")  # no text ordering
    with pytest.raises(TypeMismatch):
        compare_values(Decimal(1), "=", True)  # bool is not decimal


def test_all_of_short_circuits_and_records_atoms():
    cond = AllOf((
        Comparison(VarRef("a"), ">", Decimal(0)),
        Comparison(VarRef("b"), "=", "go"),
        Comparison(VarRef("c"), "<", Decimal(5)),
    ))
    ok, atoms = evaluate_condition(cond, _lookup(a=1, b="stop", c=99))
    assert not ok
    # c was never evaluated: the b comparison failed first
    assert [(a.lhs, a.result) for a in atoms] == [("a", True), ("b", False)]


def test_any_of_short_circuits_on_first_match():
    cond = AnyOf((
        Comparison(VarRef("a"), "=", Decimal(1)),
        Comparison(VarRef("b"), "=", Decimal(2)),
    ))
    ok, atoms = evaluate_condition(cond, _lookup(a=1, b=2))
    assert ok
    assert len(atoms) == 1


def test_atom_records_carry_formatted_values():
    cond = Comparison(VarRef("price"), ">=", Decimal("4.50"))
    ok, atoms = evaluate_condition(cond, {"price": Decimal("4.55")}.__getitem__)
    assert ok
    atom = atoms[0]
    assert (atom.lhs, atom.op, atom.rhs) == ("price", ">=", "4.50")
    assert (atom.lhs_value, atom.rhs_value, atom.result) == ("4.55", "4.50", True)
