"""Deterministic clause evaluation.

The engine is a pure function of (contract, request): it selects the
clause version in force on the evaluation date, coerces the supplied
facts against the variable schema with strict validation, evaluates the
requested clauses in dependency order and returns their outputs together
with one merged audit trail.  Identical requests produce identical
results, byte for byte.

Errors abort the whole request — no partial outputs — but the raised
error carries the trail accumulated up to the failure point.
"""

from __future__ import annotations

import datetime
import decimal
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from typing import Dict, List, Optional, Sequence, Set, Tuple

from .audit import AuditTrail, TrailBuilder
from .errors import (
    CalculationError,
    CyclicDependency,
    DaclError,
    EnumViolation,
    MissingVariable,
    NoActiveVersion,
    NoMatchingBracket,
    NoMatchingCase,
    TypeMismatch,
    UnknownClause,
    UnknownVariable,
)
from .expr import (
    AtomRecord,
    Bindings,
    ROUNDING_MODES,
    evaluate_condition,
    evaluate_expression,
)
from .loader import compiled_expression
from .model import (
    Clause,
    ClauseRef,
    ContractDefinition,
    ExprOutput,
    LogicalClause,
    Output,
    PricingFormula,
    RangeClause,
    Terminal,
    Value,
    VariableDecl,
    declared_variables,
    format_value,
    value_type_of,
    version_chain,
)

_CEIL = decimal.ROUND_CEILING
_DIV_CTX = decimal.Context(prec=50)

# human phrasing used by the coercion error contract
_TYPE_PHRASE = {
    "decimal": "a number",
    "text": "text",
    "date": "a date",
    "boolean": "a boolean",
}


@dataclass(frozen=True)
class EvaluationRequest:
    """One adjudication input: the clause set, the raw facts and the date."""

    clause_names: Tuple[str, ...]
    facts: Dict[str, object]
    evaluation_date: datetime.date

    def __post_init__(self) -> None:
        if not self.clause_names:
            raise UnknownClause("request must name at least one clause")
        if len(set(self.clause_names)) != len(self.clause_names):
            raise UnknownClause("request clause names must be duplicate-free")


@dataclass(frozen=True)
class EvaluationResult:
    outputs: Dict[str, Value]
    trail: AuditTrail

    def outputs_to_json(self) -> Dict[str, dict]:
        from .loader import _value_to_json  # serialization helper

        return {name: _value_to_json(value) for name, value in self.outputs.items()}


def select_active_version(
    contract: ContractDefinition, name: str, evaluation_date: datetime.date
) -> Clause:
    """The unique version of ``name`` whose validity window contains the
    evaluation date (missing bounds are open)."""
    for version in version_chain(contract, name):
        if version.active_on(evaluation_date):
            return version
    raise NoActiveVersion(
        f"no version of clause '{name}' is active on {evaluation_date.isoformat()}",
        clause=name,
        got=evaluation_date.isoformat(),
    )


def _raw_kind(raw: object) -> str:
    if isinstance(raw, bool):
        return "boolean"
    if isinstance(raw, (int, Decimal, float)):
        return "number"
    if isinstance(raw, datetime.date):
        return "date"
    return "string"


def _raw_text(raw: object) -> str:
    if isinstance(raw, bool):
        return "true" if raw else "false"
    if isinstance(raw, Decimal):
        return format_value(raw)
    if isinstance(raw, datetime.date):
        return raw.isoformat()
    return str(raw)


def coerce_value(name: str, raw: object, decl: VariableDecl) -> Value:
    """Coerce one raw fact to its declared type; strict on failure.

    Error messages follow the engine's fixed contracts, e.g.
    ``Variable X must be a number, got string 'abc'.``
    """

    def mismatch() -> TypeMismatch:
        return TypeMismatch(
            f"Variable {name} must be {_TYPE_PHRASE[decl.value_type]}, "
            f"got {_raw_kind(raw)} '{_raw_text(raw)}'.",
            expected=decl.value_type,
            got=_raw_kind(raw),
        )

    value: Value
    if decl.value_type == "decimal":
        if isinstance(raw, bool):
            raise mismatch()
        if isinstance(raw, Decimal):
            value = raw
        elif isinstance(raw, int):
            value = Decimal(raw)
        elif isinstance(raw, float):
            value = Decimal(str(raw))
        elif isinstance(raw, str):
            try:
                value = Decimal(raw)
            except InvalidOperation:
                raise mismatch() from None
        else:
            raise mismatch()
    elif decl.value_type == "text":
        if not isinstance(raw, str):
            raise mismatch()
        value = raw
    elif decl.value_type == "date":
        if isinstance(raw, datetime.date):
            value = raw
        elif isinstance(raw, str):
            try:
                value = datetime.date.fromisoformat(raw)
            except ValueError:
                raise mismatch() from None
        else:
            raise mismatch()
    else:  # boolean
        if isinstance(raw, bool):
            value = raw
        elif isinstance(raw, str) and raw in ("true", "false"):
            value = raw == "true"
        else:
            raise mismatch()

    if decl.enum_values is not None and isinstance(value, str):
        if value not in decl.enum_values:
            raise EnumViolation(
                f"Variable {name} has invalid value '{value}'. "
                f"Valid values: {', '.join(sorted(decl.enum_values))}.",
                expected=", ".join(sorted(decl.enum_values)),
                got=value,
            )
    return value


class _Evaluation:
    """Private working state of one request; never shared."""

    def __init__(
        self,
        contract: ContractDefinition,
        request: EvaluationRequest,
        strict_facts: bool = True,
    ) -> None:
        self.contract = contract
        self.request = request
        self.strict_facts = strict_facts
        self.decls = declared_variables(contract)
        self.clause_names = set(contract.clause_names())
        self.trail = TrailBuilder()
        self.values: Dict[str, Value] = {}
        self.provenance: Dict[str, str] = {}
        self.stack: List[str] = []
        self.outputs: Dict[str, Value] = {}
        self.ignored_facts: List[str] = []

    # -- facts ---------------------------------------------------------------

    def coerce_facts(self) -> None:
        for name in self.request.facts:
            decl = self.decls.get(name)
            if decl is None or decl.source != "external":
                if self.strict_facts:
                    reason = (
                        "not declared by the contract"
                        if decl is None
                        else f"declared with source '{decl.source}', not external"
                    )
                    raise UnknownVariable(
                        f"unknown fact '{name}': {reason}", got=name
                    )
                self.ignored_facts.append(name)
                continue
            raw = self.request.facts[name]
            value = coerce_value(name, raw, decl)
            self.values[name] = value
            self.provenance[name] = "external"
            self.trail.record_variable(name, decl.value_type, _raw_text(raw), value, "ok")

    def bindings(self) -> Bindings:
        return Bindings(dict(self.values), dict(self.provenance))

    # -- variable resolution ---------------------------------------------------

    def _inject_const(self, decl: VariableDecl) -> Value:
        if decl.const_value is not None:
            return decl.const_value
        for window in decl.const_validity or ():
            after_start = window.start is None or self.request.evaluation_date >= window.start
            before_end = window.end is None or self.request.evaluation_date <= window.end
            if after_start and before_end:
                return window.value
        raise NoActiveVersion(
            f"const variable '{decl.name}' has no value valid on "
            f"{self.request.evaluation_date.isoformat()}",
            got=decl.name,
        )

    def read(self, name: str) -> Value:
        if name in self.values:
            return self.values[name]
        decl = self.decls.get(name)
        if decl is not None and decl.source == "const":
            value = self._inject_const(decl)
            self.values[name] = value
            self.provenance[name] = "const"
            self.trail.record_variable(name, decl.value_type, None, value, "injected")
            return value
        if name in self.clause_names:
            return self.eval_clause(name)
        clause = self.stack[-1] if self.stack else "?"
        if decl is not None:
            raise MissingVariable(
                f"Variable {name} required for clause {clause}. "
                f"Expected: {decl.value_type} - {decl.description}.",
                clause=clause,
                expected=decl.value_type,
                got=name,
            )
        raise MissingVariable(
            f"Variable {name} required for clause {clause}. Expected: unknown - "
            "not declared by the contract.",
            clause=clause,
            got=name,
        )

    def bind_derived(self, name: str, value: Value, declared_type: Optional[str] = None) -> None:
        self.values[name] = value
        self.provenance[name] = "derived"
        self.trail.record_variable(
            name, declared_type or value_type_of(value), None, value, "derived"
        )

    # -- clause dispatch -------------------------------------------------------

    def eval_clause(self, name: str):
        if name in self.outputs:
            return self.outputs[name]
        if name in self.stack:
            raise CyclicDependency(self.stack[self.stack.index(name):] + [name])
        version = select_active_version(self.contract, name, self.request.evaluation_date)
        self.stack.append(name)
        try:
            window = version.window()
            if version.kind == "procedure":
                value = self._eval_procedure(version, window)
            else:
                self.trail.record_path(name, window)
                value = self._eval_body(version.body, name, window)
            if isinstance(value, Terminal):
                value = value.output
        finally:
            self.stack.pop()
        self.outputs[name] = value
        self.bind_derived(name, value)
        return value

    def _eval_procedure(self, version: Clause, window: str) -> Value:
        last: Optional[Value] = None
        for step in version.body:
            self.trail.record_path(version.name, window, step.name)
            if isinstance(step.body, ClauseRef):
                value: object = self.eval_clause(step.body.name)
            else:
                value = self._eval_body(step.body, version.name, window, step=step.name)
            terminal = isinstance(value, Terminal)
            if terminal:
                value = value.output
            self.bind_derived(step.name, value)
            last = value
            if terminal and step.terminal_on_output:
                break
        if last is None:
            raise NoMatchingCase(
                f"procedure '{version.name}' has no steps", clause=version.name
            )
        return last

    def _eval_body(self, body, clause: str, window: str, step: str = ""):
        if isinstance(body, RangeClause):
            return self._eval_range(body, clause, window)
        if isinstance(body, LogicalClause):
            return self._eval_logical(body, clause, window)
        if isinstance(body, PricingFormula):
            return self._eval_pricing(body, clause)
        if isinstance(body, ClauseRef):
            return self.eval_clause(body.name)
        raise DaclError(f"unknown clause body {body!r}", clause=clause)

    # -- range -----------------------------------------------------------------

    def _eval_range(self, body: RangeClause, clause: str, window: str) -> Value:
        raw = self.read(body.input_variable)
        if isinstance(raw, bool) or not isinstance(raw, Decimal):
            raise TypeMismatch(
                f"range input '{body.input_variable}' must be decimal, "
                f"got {value_type_of(raw)} '{format_value(raw)}'",
                clause=clause,
                expected="decimal",
                got=value_type_of(raw),
            )
        x = raw
        for bracket in body.brackets:
            if bracket.min <= x <= bracket.max:
                self.trail.record_decision(
                    clause, window, "range", f"bracket:{bracket.label}"
                )
                return bracket.output
        top = max(body.brackets, key=lambda b: b.max)
        if body.above_top_rule is not None and x > top.max:
            rule = body.above_top_rule
            steps = _DIV_CTX.divide(x - top.max, rule.step_size).to_integral_value(
                rounding=_CEIL
            )
            if not isinstance(top.output, Decimal) or isinstance(top.output, bool):
                raise TypeMismatch(
                    "above-top extrapolation requires a decimal top bracket output",
                    clause=clause,
                )
            value = top.output + steps * rule.increment
            self.trail.record_decision(clause, window, "range", f"above_top:+{steps}")
            return value
        if body.default is not None:
            self.trail.record_decision(clause, window, "range", "default")
            return body.default
        raise NoMatchingBracket(
            f"no bracket of clause '{clause}' matches input {format_value(x)}",
            clause=clause,
            got=format_value(x),
        )

    # -- logical ---------------------------------------------------------------

    def _eval_logical(self, body: LogicalClause, clause: str, window: str):
        atoms: List[AtomRecord] = []
        for i, case in enumerate(body.cases):
            matched, _ = evaluate_condition(case.condition, self.read, atoms)
            if matched:
                self.trail.record_decision(clause, window, "logical", f"case:{i}", atoms)
                return self._resolve_output(case.output, body, clause, f"case:{i}")
        if body.default is not None:
            self.trail.record_decision(clause, window, "logical", "default", atoms)
            return self._resolve_output(body.default, body, clause, "default")
        self.trail.record_decision(clause, window, "logical", "no-match", atoms)
        raise NoMatchingCase(
            f"no case of clause '{clause}' matched and no default is declared "
            f"({len(atoms)} atoms evaluated)",
            clause=clause,
        )

    def _resolve_output(self, output: Output, body: LogicalClause, clause: str, slot: str):
        if isinstance(output, Terminal):
            return Terminal(self._resolve_output(output.output, body, clause, slot))
        if isinstance(output, ExprOutput):
            value, inputs = evaluate_expression(
                compiled_expression(output.text),
                self.read,
                precision=body.precision,
                rounding=body.rounding,
            )
            rounding = f"{body.precision}:{body.rounding}" if body.precision is not None else "-"
            self.trail.record_formula(clause, slot, output.text, inputs, value, rounding)
            return value
        if isinstance(output, ClauseRef):
            return self.eval_clause(output.name)
        return output

    # -- pricing ---------------------------------------------------------------

    def _eval_pricing(self, body: PricingFormula, clause: str) -> Value:
        last_index = len(body.sub_formulas) - 1
        for i, sub in enumerate(body.sub_formulas):
            final = i == last_index and sub.target == body.result_variable
            value, inputs = evaluate_expression(
                compiled_expression(sub.expression),
                self.read,
                precision=body.precision if final else None,
                rounding=body.rounding,
            )
            rounding = f"{body.precision}:{body.rounding}" if final else "-"
            self.trail.record_formula(clause, sub.target, sub.expression, inputs, value, rounding)
            self.bind_derived(sub.target, value, "decimal")
        result = self.values[body.result_variable]
        if not isinstance(result, Decimal):
            raise TypeMismatch(
                f"pricing result '{body.result_variable}' is not decimal", clause=clause
            )
        quantum = Decimal(1).scaleb(-body.precision)
        rounded = result.quantize(quantum, rounding=ROUNDING_MODES[body.rounding])
        if rounded != result or rounded.as_tuple().exponent != result.as_tuple().exponent:
            # result target was not the final sub-formula; round and re-record
            self.values[body.result_variable] = rounded
            self.trail.record_formula(
                clause,
                body.result_variable,
                body.result_variable,
                {body.result_variable: result},
                rounded,
                f"{body.precision}:{body.rounding}",
            )
        return self.values[body.result_variable]


def coerce_facts(
    contract: ContractDefinition, request: EvaluationRequest, strict: bool = True
) -> Bindings:
    """Coerce the request's raw facts against the schema (no evaluation)."""
    ev = _Evaluation(contract, request, strict_facts=strict)
    ev.coerce_facts()
    return ev.bindings()


def evaluate_clause(
    contract: ContractDefinition,
    name: str,
    request: EvaluationRequest,
    trail: Optional[TrailBuilder] = None,
    strict_facts: bool = True,
) -> Value:
    """Evaluate a single clause; mostly a building block for
    :func:`evaluate_clauses`."""
    ev = _Evaluation(contract, request, strict_facts=strict_facts)
    if trail is not None:
        ev.trail = trail
    ev.coerce_facts()
    return ev.eval_clause(name)


def _request_order(contract: ContractDefinition, request: EvaluationRequest) -> List[str]:
    """Requested clauses in cross-read dependency order, ties broken by
    request order."""
    from .loader import clause_reads  # local import avoids a cycle at import time

    requested = list(request.clause_names)
    reads: Dict[str, Set[str]] = {}
    for name in requested:
        direct: Set[str] = set()
        seen: Set[str] = set()
        frontier = [name]
        while frontier:
            current = frontier.pop()
            if current in seen:
                continue
            seen.add(current)
            try:
                versions = version_chain(contract, current)
            except UnknownClause:
                continue
            for version in versions:
                for ref in clause_reads(version):
                    if ref in request.clause_names and ref != name:
                        direct.add(ref)
                    if ref not in seen:
                        frontier.append(ref)
        reads[name] = direct

    ordered: List[str] = []
    pending = list(requested)
    while pending:
        progressed = False
        for name in list(pending):
            if reads[name] <= set(ordered):
                ordered.append(name)
                pending.remove(name)
                progressed = True
        if not progressed:
            # cycle among requested clauses; evaluation will report it
            ordered.extend(pending)
            break
    return ordered


def evaluate_clauses(
    contract: ContractDefinition,
    request: EvaluationRequest,
    strict_facts: bool = True,
) -> EvaluationResult:
    """Evaluate the full requested clause set against the facts.

    Requires a contract that validated with zero errors.  On failure the
    raised :class:`~dacl.errors.DaclError` carries the partial trail in
    its ``trail`` attribute.
    """
    for name in request.clause_names:
        if name not in contract.clause_names():
            raise UnknownClause(f"unknown clause '{name}'", clause=name, got=name)
    ev = _Evaluation(contract, request, strict_facts=strict_facts)
    try:
        ev.coerce_facts()
        for name in _request_order(contract, request):
            ev.eval_clause(name)
    except DaclError as exc:
        if exc.clause is None and ev.stack:
            exc.clause = ev.stack[-1]
        exc.trail = ev.trail.build()
        raise
    outputs = {name: ev.outputs[name] for name in request.clause_names}
    return EvaluationResult(outputs=outputs, trail=ev.trail.build())
