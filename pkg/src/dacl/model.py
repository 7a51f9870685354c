"""In-memory contract representation.

A contract is a typed variable schema plus a list of versioned clauses.
Clauses come in four kinds: procedure (sequential steps), logical
(ordered condition cases), range (bracket lookup) and pricing (sequential
sub-formulas).  All values are exact: decimals, text, calendar dates and
booleans — binary floating point never enters evaluation.

Instances are immutable after construction; structural validation beyond
what construction forces lives in :mod:`dacl.loader`.
"""

from __future__ import annotations

import datetime
import re
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Dict, List, Optional, Tuple, Union

from .errors import DuplicateVariable, UnknownClause

# Runtime values are plain Python exact types.
Value = Union[Decimal, str, datetime.date, bool]

IDENTIFIER_RE = re.compile(r"^[a-z][a-z0-9_]*$")

VALUE_TYPES = ("decimal", "text", "date", "boolean")
VARIABLE_SOURCES = ("external", "const", "derived")

COMPARISON_OPS = ("=", "!=", "<", "<=", ">", ">=")
# Ordering operators require decimal or date operands on both sides.
ORDERING_OPS = ("<", "<=", ">", ">=")


def value_type_of(value: Value) -> str:
    """Name the runtime type tag of a value."""
    if isinstance(value, bool):
        return "boolean"
    if isinstance(value, Decimal):
        return "decimal"
    if isinstance(value, datetime.date):
        return "date"
    if isinstance(value, str):
        return "text"
    raise TypeError(f"not a contract value: {value!r}")


def format_value(value: Value) -> str:
    """Render a value without exponent notation, for traces and errors."""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, Decimal):
        return format(value, "f")
    if isinstance(value, datetime.date):
        return value.isoformat()
    return value


@dataclass(frozen=True)
class ConstWindow:
    """One (value, start, end) window of a time-varying constant."""

    value: Value
    start: Optional[datetime.date]
    end: Optional[datetime.date]


@dataclass(frozen=True)
class VariableDecl:
    name: str
    source: str  # external | const | derived
    value_type: str  # decimal | text | date | boolean
    description: str = ""
    enum_values: Optional[Tuple[str, ...]] = None
    const_value: Optional[Value] = None
    const_validity: Optional[Tuple[ConstWindow, ...]] = None


@dataclass(frozen=True)
class VarRef:
    """Reference to a variable (or clause/step output) inside a condition."""

    name: str


Operand = Union[VarRef, Value]


@dataclass(frozen=True)
class Comparison:
    lhs: Operand
    op: str  # one of COMPARISON_OPS
    rhs: Operand


@dataclass(frozen=True)
class AllOf:
    items: Tuple["Condition", ...]


@dataclass(frozen=True)
class AnyOf:
    items: Tuple["Condition", ...]


Condition = Union[Comparison, AllOf, AnyOf]


@dataclass(frozen=True)
class Terminal:
    """Marker wrapper: this output halts the enclosing procedure."""

    output: "Output"


@dataclass(frozen=True)
class ExprOutput:
    """Case output computed from an arithmetic expression."""

    text: str


@dataclass(frozen=True)
class ClauseRef:
    """Case/step output delegated to another clause."""

    name: str


Output = Union[Value, Terminal, ExprOutput, ClauseRef]


@dataclass(frozen=True)
class Bracket:
    min: Decimal
    max: Decimal
    output: Value
    label: str = ""


@dataclass(frozen=True)
class AboveTopRule:
    """Open-ended extrapolation above the top bracket: for inputs strictly
    greater than the top bracket's max, the output grows by ``increment``
    for every started ``step_size`` above that max."""

    step_size: Decimal
    increment: Decimal


@dataclass(frozen=True)
class RangeClause:
    input_variable: str
    brackets: Tuple[Bracket, ...]
    default: Optional[Value] = None
    above_top_rule: Optional[AboveTopRule] = None
    # Decimal places of the bracket bounds; consecutive brackets whose
    # boundaries differ by exactly one unit at this scale are adjacent.
    boundary_scale: int = 2


@dataclass(frozen=True)
class Case:
    condition: Condition
    output: Output


@dataclass(frozen=True)
class LogicalClause:
    cases: Tuple[Case, ...]
    default: Optional[Output] = None
    # Applied to expression-valued case outputs.
    precision: Optional[int] = None
    rounding: str = "half_up"


@dataclass(frozen=True)
class SubFormula:
    target: str
    expression: str


@dataclass(frozen=True)
class PricingFormula:
    sub_formulas: Tuple[SubFormula, ...]
    result_variable: str
    precision: int = 2
    rounding: str = "half_up"


StepBody = Union[LogicalClause, RangeClause, PricingFormula, ClauseRef]


@dataclass(frozen=True)
class ProcedureStep:
    name: str
    body: StepBody
    terminal_on_output: bool = False


ClauseKind = Union[Tuple[ProcedureStep, ...], LogicalClause, RangeClause, PricingFormula]


@dataclass(frozen=True)
class Clause:
    name: str
    kind: str  # procedure | logical | range | pricing
    body: ClauseKind
    validity_start_date: Optional[datetime.date] = None
    validity_end_date: Optional[datetime.date] = None
    source_excerpt: str = ""

    def window(self) -> str:
        """Render the validity window for traces and coverage keys."""
        start = self.validity_start_date.isoformat() if self.validity_start_date else "-"
        end = self.validity_end_date.isoformat() if self.validity_end_date else "-"
        return f"{start}..{end}"

    def active_on(self, date: datetime.date) -> bool:
        if self.validity_start_date and date < self.validity_start_date:
            return False
        if self.validity_end_date and date > self.validity_end_date:
            return False
        return True


@dataclass(frozen=True)
class ContractDefinition:
    contract_id: str
    variables: Tuple[VariableDecl, ...]
    clauses: Tuple[Clause, ...]
    metadata: Dict[str, str] = field(default_factory=dict)

    def clause_names(self) -> List[str]:
        seen: List[str] = []
        for clause in self.clauses:
            if clause.name not in seen:
                seen.append(clause.name)
        return seen


def declared_variables(contract: ContractDefinition) -> Dict[str, VariableDecl]:
    """Map each declared variable by name; duplicate names are an error."""
    out: Dict[str, VariableDecl] = {}
    for decl in contract.variables:
        if decl.name in out:
            raise DuplicateVariable(
                f"variable '{decl.name}' declared more than once", got=decl.name
            )
        out[decl.name] = decl
    return out


def version_chain(contract: ContractDefinition, name: str) -> List[Clause]:
    """All clauses sharing ``name``, ascending by validity start (absent
    start sorts first)."""
    versions = [c for c in contract.clauses if c.name == name]
    if not versions:
        raise UnknownClause(f"unknown clause '{name}'", got=name)
    return sorted(
        versions,
        key=lambda c: (c.validity_start_date is not None, c.validity_start_date or datetime.date.min),
    )
