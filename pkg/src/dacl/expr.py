"""Sandboxed arithmetic expressions and condition evaluation.

The expression language is deliberately closed: literals, variables, the
five arithmetic operators and six whitelisted functions.  There is no
path from an expression to host-language evaluation, I/O or name lookup
outside the caller-supplied bindings, so the sandbox guarantee is
structural rather than policed.

All arithmetic is exact decimal.  Intermediates are computed in a fixed
50-significant-digit context (at least six guard digits beyond any
supported output precision); the final value is quantized to the caller's
precision and rounding mode, so results are bit-identical across runs and
platforms.
"""

from __future__ import annotations

import datetime
import decimal
import re
from dataclasses import dataclass
from decimal import Decimal
from typing import Callable, Dict, List, Optional, Tuple, Union

from .errors import (
    CalculationError,
    MissingVariable,
    ParseError,
    SandboxViolation,
    TypeMismatch,
)
from .model import (
    AllOf,
    AnyOf,
    Comparison,
    Condition,
    ORDERING_OPS,
    Value,
    VarRef,
    format_value,
    value_type_of,
)

# function name -> (min arity, max arity)
FUNCTION_WHITELIST: Dict[str, Tuple[int, int]] = {
    "ceil": (1, 1),
    "floor": (1, 1),
    "round": (1, 2),
    "sqrt": (1, 1),
    "exp": (1, 1),
    "log": (1, 1),
}

ROUNDING_MODES: Dict[str, str] = {
    "half_up": decimal.ROUND_HALF_UP,
    "half_down": decimal.ROUND_HALF_DOWN,
    "half_even": decimal.ROUND_HALF_EVEN,
    "floor": decimal.ROUND_FLOOR,
    "ceiling": decimal.ROUND_CEILING,
    "down": decimal.ROUND_DOWN,
    "up": decimal.ROUND_UP,
}

DEFAULT_ROUNDING = "half_up"

# 50 significant digits for intermediates; traps keep faults loud.
_CTX = decimal.Context(
    prec=50,
    rounding=decimal.ROUND_HALF_EVEN,
    traps=[decimal.InvalidOperation, decimal.DivisionByZero, decimal.Overflow],
)

_MAX_EXPONENT = 1000  # |n| bound for x ^ n


# --- abstract syntax ---------------------------------------------------------


@dataclass(frozen=True)
class Literal:
    value: Decimal


@dataclass(frozen=True)
class Variable:
    name: str


@dataclass(frozen=True)
class Unary:
    op: str  # "neg"
    operand: "Expr"


@dataclass(frozen=True)
class Binary:
    op: str  # + - * / ^
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Call:
    fn: str
    args: Tuple["Expr", ...]

    def __post_init__(self) -> None:
        if self.fn not in FUNCTION_WHITELIST:
            raise SandboxViolation(f"function '{self.fn}' not whitelisted", got=self.fn)
        lo, hi = FUNCTION_WHITELIST[self.fn]
        if not lo <= len(self.args) <= hi:
            raise ParseError(
                f"function '{self.fn}' takes {lo}"
                + (f"..{hi}" if hi != lo else "")
                + f" arguments, got {len(self.args)}"
            )


Expr = Union[Literal, Variable, Unary, Binary, Call]


@dataclass(frozen=True)
class Bindings:
    """Typed runtime values with their provenance, keyed by identifier."""

    values: Dict[str, Value]
    provenance: Dict[str, str]  # external | const | derived

    def lookup(self, name: str) -> Value:
        if name not in self.values:
            raise MissingVariable(f"variable '{name}' is not bound", got=name)
        return self.values[name]


# --- parsing -----------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<number>\d+(?:\.\d+)?)"
    r"|(?P<ident>[a-z][a-z0-9_]*)"
    r"|(?P<op>[+\-*/^(),]))"
)


def _tokenize(text: str) -> List[Tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m or m.end() == pos:
            # skip bare whitespace tail
            if text[pos:].strip() == "":
                break
            raise ParseError(
                f"unexpected character {text[pos:].lstrip()[0]!r} at position {pos}",
                column=pos,
            )
        if m.group("number"):
            tokens.append(("number", m.group("number"), m.start("number")))
        elif m.group("ident"):
            tokens.append(("ident", m.group("ident"), m.start("ident")))
        else:
            tokens.append(("op", m.group("op"), m.start("op")))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    """Recursive-descent parser.

    Precedence (tightest first): unary minus, ``^`` (right-associative),
    ``*`` ``/``, ``+`` ``-``.  Note unary minus binds tighter than ``^``,
    so ``-2 ^ 2`` is ``(-2) ^ 2``.
    """

    def __init__(self, text: str) -> None:
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self) -> Tuple[str, str, int]:
        return self.tokens[self.i]

    def next(self) -> Tuple[str, str, int]:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_op(self, op: str) -> None:
        kind, val, pos = self.next()
        if kind != "op" or val != op:
            raise ParseError(f"expected '{op}' at position {pos}, got {val!r}", column=pos)

    def parse(self) -> Expr:
        expr = self.additive()
        kind, val, pos = self.peek()
        if kind != "end":
            raise ParseError(f"unexpected token {val!r} at position {pos}", column=pos)
        return expr

    def additive(self) -> Expr:
        left = self.multiplicative()
        while self.peek()[:2] in (("op", "+"), ("op", "-")):
            op = self.next()[1]
            left = Binary(op, left, self.multiplicative())
        return left

    def multiplicative(self) -> Expr:
        left = self.power()
        while self.peek()[:2] in (("op", "*"), ("op", "/")):
            op = self.next()[1]
            left = Binary(op, left, self.power())
        return left

    def power(self) -> Expr:
        base = self.unary()
        if self.peek()[:2] == ("op", "^"):
            self.next()
            return Binary("^", base, self.power())  # right-assoc
        return base

    def unary(self) -> Expr:
        if self.peek()[:2] == ("op", "-"):
            self.next()
            return Unary("neg", self.unary())
        return self.atom()

    def atom(self) -> Expr:
        kind, val, pos = self.next()
        if kind == "number":
            return Literal(Decimal(val))
        if kind == "ident":
            if self.peek()[:2] == ("op", "("):
                return self.call(val, pos)
            return Variable(val)
        if kind == "op" and val == "(":
            inner = self.additive()
            self.expect_op(")")
            return inner
        raise ParseError(f"unexpected token {val!r} at position {pos}", column=pos)

    def call(self, fn: str, pos: int) -> Expr:
        if fn not in FUNCTION_WHITELIST:
            raise SandboxViolation(f"function '{fn}' not whitelisted", got=fn, path=str(pos))
        self.expect_op("(")
        args = [self.additive()]
        while self.peek()[:2] == ("op", ","):
            self.next()
            args.append(self.additive())
        self.expect_op(")")
        return Call(fn, tuple(args))


def parse_expression(text: str) -> Expr:
    """Parse expression text into the closed AST."""
    return _Parser(text).parse()


def expression_variables(expr: Expr) -> List[str]:
    """Identifiers read by an expression, in first-appearance order."""
    out: List[str] = []

    def walk(node: Expr) -> None:
        if isinstance(node, Variable):
            if node.name not in out:
                out.append(node.name)
        elif isinstance(node, Unary):
            walk(node.operand)
        elif isinstance(node, Binary):
            walk(node.left)
            walk(node.right)
        elif isinstance(node, Call):
            for arg in node.args:
                walk(arg)

    walk(expr)
    return out


# --- evaluation --------------------------------------------------------------

Lookup = Callable[[str], Value]


def _as_decimal(name: str, value: Value) -> Decimal:
    if isinstance(value, bool) or not isinstance(value, Decimal):
        raise TypeMismatch(
            f"variable '{name}' must be decimal in an expression, "
            f"got {value_type_of(value)} '{format_value(value)}'",
            expected="decimal",
            got=value_type_of(value),
        )
    return value


def _quantize(value: Decimal, places: int, rounding: str) -> Decimal:
    mode = ROUNDING_MODES[rounding]
    try:
        return value.quantize(Decimal(1).scaleb(-places), rounding=mode, context=_CTX)
    except decimal.InvalidOperation as exc:
        raise CalculationError(f"cannot round {format_value(value)} to {places} places") from exc


def evaluate_expression(
    expr: Expr,
    lookup: Lookup,
    precision: Optional[int] = None,
    rounding: str = DEFAULT_ROUNDING,
) -> Tuple[Decimal, Dict[str, Decimal]]:
    """Evaluate to an exact decimal.

    ``lookup`` resolves variable reads; ``precision``, when given, rounds
    the final value to that many decimal places with ``rounding``.
    Returns the value and the variables read with their values (for the
    formula breakdown in the audit trail).
    """
    if rounding not in ROUNDING_MODES:
        raise CalculationError(f"unknown rounding mode '{rounding}'", got=rounding)
    inputs: Dict[str, Decimal] = {}

    def ev(node: Expr) -> Decimal:
        if isinstance(node, Literal):
            return node.value
        if isinstance(node, Variable):
            value = _as_decimal(node.name, lookup(node.name))
            inputs[node.name] = value
            return value
        if isinstance(node, Unary):
            return _CTX.minus(ev(node.operand))
        if isinstance(node, Binary):
            left = ev(node.left)
            if node.op == "+":
                return _CTX.add(left, ev(node.right))
            if node.op == "-":
                return _CTX.subtract(left, ev(node.right))
            if node.op == "*":
                return _CTX.multiply(left, ev(node.right))
            if node.op == "/":
                right = ev(node.right)
                if right == 0:
                    raise CalculationError("division by zero")
                return _CTX.divide(left, right)
            if node.op == "^":
                exponent = ev(node.right)
                if exponent != exponent.to_integral_value():
                    raise CalculationError(
                        f"exponent must be an integer, got {format_value(exponent)}"
                    )
                n = int(exponent)
                if abs(n) > _MAX_EXPONENT:
                    raise CalculationError(f"exponent {n} out of range (|n| <= {_MAX_EXPONENT})")
                if left == 0 and n < 0:
                    raise CalculationError("division by zero")
                return _CTX.power(left, Decimal(n))
            raise CalculationError(f"unknown operator '{node.op}'")
        if isinstance(node, Call):
            args = [ev(a) for a in node.args]
            return _call(node.fn, args, rounding)
        raise CalculationError(f"unknown expression node {node!r}")

    value = ev(expr)
    if precision is not None:
        value = _quantize(value, precision, rounding)
    else:
        value = _CTX.plus(value)
    return value, inputs


def _call(fn: str, args: List[Decimal], rounding: str) -> Decimal:
    x = args[0]
    if fn == "ceil":
        return x.to_integral_value(rounding=decimal.ROUND_CEILING)
    if fn == "floor":
        return x.to_integral_value(rounding=decimal.ROUND_FLOOR)
    if fn == "round":
        places = 0
        if len(args) == 2:
            if args[1] != args[1].to_integral_value():
                raise CalculationError("round() places must be an integer")
            places = int(args[1])
            if not 0 <= places <= 40:
                raise CalculationError(f"round() places {places} out of range (0..40)")
        return _quantize(x, places, rounding)
    if fn == "sqrt":
        if x < 0:
            raise CalculationError(f"sqrt of negative value {format_value(x)}")
        return _CTX.sqrt(x)
    if fn == "exp":
        if abs(x) > 1000:
            raise CalculationError(f"exp argument {format_value(x)} out of range")
        return _CTX.exp(x)
    if fn == "log":
        if x <= 0:
            raise CalculationError(f"log of non-positive value {format_value(x)}")
        return _CTX.ln(x)
    raise SandboxViolation(f"function '{fn}' not whitelisted", got=fn)


# --- conditions --------------------------------------------------------------


@dataclass(frozen=True)
class AtomRecord:
    """One comparison actually evaluated, with operand values and outcome."""

    lhs: str
    op: str
    rhs: str
    lhs_value: str
    rhs_value: str
    result: bool


def _resolve_operand(operand, lookup: Lookup) -> Tuple[str, Value]:
    if isinstance(operand, VarRef):
        return operand.name, lookup(operand.name)
    return format_value(operand), operand


def compare_values(lhs: Value, op: str, rhs: Value) -> bool:
    lt, rt = value_type_of(lhs), value_type_of(rhs)
    if op in ORDERING_OPS:
        if lt != rt or lt not in ("decimal", "date"):
            raise TypeMismatch(
                f"operator '{op}' requires two decimals or two dates, "
                f"got {lt} and {rt}",
                expected="decimal|date",
                got=f"{lt},{rt}",
            )
    elif lt != rt:
        raise TypeMismatch(
            f"cannot compare {lt} '{format_value(lhs)}' with {rt} '{format_value(rhs)}'",
            expected=lt,
            got=rt,
        )
    if op == "=":
        return lhs == rhs
    if op == "!=":
        return lhs != rhs
    if op == "<":
        return lhs < rhs
    if op == "<=":
        return lhs <= rhs
    if op == ">":
        return lhs > rhs
    if op == ">=":
        return lhs >= rhs
    raise TypeMismatch(f"unknown comparison operator '{op}'", got=op)


def evaluate_condition(
    cond: Condition, lookup: Lookup, atoms: Optional[List[AtomRecord]] = None
) -> Tuple[bool, List[AtomRecord]]:
    """Evaluate with left-to-right short-circuit; returns the outcome and
    exactly the atoms that were actually evaluated, in order."""
    if atoms is None:
        atoms = []
    if isinstance(cond, Comparison):
        lhs_name, lhs_value = _resolve_operand(cond.lhs, lookup)
        rhs_name, rhs_value = _resolve_operand(cond.rhs, lookup)
        result = compare_values(lhs_value, cond.op, rhs_value)
        atoms.append(
            AtomRecord(
                lhs=lhs_name,
                op=cond.op,
                rhs=rhs_name,
                lhs_value=format_value(lhs_value),
                rhs_value=format_value(rhs_value),
                result=result,
            )
        )
        return result, atoms
    if isinstance(cond, AllOf):
        for item in cond.items:
            ok, _ = evaluate_condition(item, lookup, atoms)
            if not ok:
                return False, atoms
        return True, atoms
    if isinstance(cond, AnyOf):
        for item in cond.items:
            ok, _ = evaluate_condition(item, lookup, atoms)
            if ok:
                return True, atoms
        return False, atoms
    raise TypeMismatch(f"unknown condition node {cond!r}")


def condition_variables(cond: Condition) -> List[str]:
    """Identifiers read by a condition, in first-appearance order."""
    out: List[str] = []

    def walk(node: Condition) -> None:
        if isinstance(node, Comparison):
            for operand in (node.lhs, node.rhs):
                if isinstance(operand, VarRef) and operand.name not in out:
                    out.append(operand.name)
        else:
            for item in node.items:
                walk(item)

    walk(cond)
    return out
