"""Contract file parsing, load-time validation and dependency ordering.

The file format is UTF-8 JSON with a top-level ``dacl_version: "1"``
field; the full schema is documented in ``docs/format.md`` and shipped
machine-readable as ``docs/schema/contract.schema.json``.

``parse_contract`` builds the structural model (syntax only);
``validate_contract`` runs every load-time rule and returns findings as
data — a contract is deployable iff the error list is empty.  Warnings
never block loading.
"""

from __future__ import annotations

import contextvars
import datetime
import functools
import json
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from typing import Dict, List, Optional, Sequence, Set, Tuple, Union

from . import expr as expr_mod
from .errors import CyclicDependency, ParseError, SandboxViolation
from .model import (
    AboveTopRule,
    AllOf,
    AnyOf,
    Bracket,
    Case,
    Clause,
    ClauseRef,
    Comparison,
    COMPARISON_OPS,
    Condition,
    ConstWindow,
    ContractDefinition,
    ExprOutput,
    IDENTIFIER_RE,
    LogicalClause,
    ORDERING_OPS,
    Output,
    PricingFormula,
    ProcedureStep,
    RangeClause,
    SubFormula,
    Terminal,
    Value,
    VALUE_TYPES,
    VariableDecl,
    VARIABLE_SOURCES,
    VarRef,
    format_value,
    value_type_of,
    version_chain,
)

MAX_CONDITION_DEPTH = 32

# Rounding applied when a clause omits an explicit "rounding" field; the
# CLI maps the DACL_ROUNDING environment variable onto this.
_default_rounding: contextvars.ContextVar = contextvars.ContextVar(
    "dacl_default_rounding", default=expr_mod.DEFAULT_ROUNDING
)

ONE_DAY = datetime.timedelta(days=1)


@functools.lru_cache(maxsize=None)
def compiled_expression(text: str) -> expr_mod.Expr:
    """Parse-once cache shared by validation and evaluation."""
    return expr_mod.parse_expression(text)


# --- findings ----------------------------------------------------------------


@dataclass(frozen=True)
class Finding:
    code: str
    message: str
    path: str

    def to_dict(self) -> dict:
        return {"code": self.code, "message": self.message, "path": self.path}


@dataclass
class ValidationReport:
    errors: List[Finding] = field(default_factory=list)
    warnings: List[Finding] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors

    def error(self, code: str, message: str, path: str) -> None:
        self.errors.append(Finding(code, message, path))

    def warn(self, code: str, message: str, path: str) -> None:
        self.warnings.append(Finding(code, message, path))

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "errors": [f.to_dict() for f in self.errors],
            "warnings": [f.to_dict() for f in self.warnings],
        }


# --- parsing -----------------------------------------------------------------


def _require(obj: dict, key: str, path: str):
    if key not in obj:
        raise ParseError(f"missing required field '{key}'", path=path)
    return obj[key]


def _identifier(raw, path: str) -> str:
    if not isinstance(raw, str) or not IDENTIFIER_RE.match(raw):
        raise ParseError(
            f"invalid identifier {raw!r} (expected [a-z][a-z0-9_]*)", path=path
        )
    return raw


def _parse_date(raw, path: str) -> datetime.date:
    if not isinstance(raw, str):
        raise ParseError(f"expected ISO date string, got {raw!r}", path=path)
    try:
        return datetime.date.fromisoformat(raw)
    except ValueError as exc:
        raise ParseError(f"invalid date {raw!r}: {exc}", path=path) from None


def _parse_decimal(raw, path: str) -> Decimal:
    if isinstance(raw, bool):
        raise ParseError(f"expected a decimal, got boolean", path=path)
    if isinstance(raw, Decimal):
        return raw
    if isinstance(raw, (int, str)):
        try:
            return Decimal(raw)
        except InvalidOperation:
            pass
    raise ParseError(f"expected a decimal, got {raw!r}", path=path)


def _parse_value(raw, path: str) -> Value:
    """Value literal: tagged object or scalar shorthand (number -> decimal,
    string -> text, true/false -> boolean)."""
    if isinstance(raw, bool):
        return raw
    if isinstance(raw, Decimal):
        return raw
    if isinstance(raw, int):
        return Decimal(raw)
    if isinstance(raw, str):
        return raw
    if isinstance(raw, dict):
        if len(raw) != 1:
            raise ParseError(f"value literal must have exactly one tag, got {sorted(raw)}", path=path)
        tag, inner = next(iter(raw.items()))
        if tag == "decimal":
            return _parse_decimal(inner, path)
        if tag == "text":
            if not isinstance(inner, str):
                raise ParseError(f"text literal must be a string, got {inner!r}", path=path)
            return inner
        if tag == "date":
            return _parse_date(inner, path)
        if tag == "boolean":
            if not isinstance(inner, bool):
                raise ParseError(f"boolean literal must be true/false, got {inner!r}", path=path)
            return inner
        raise ParseError(f"unknown value tag '{tag}'", path=path)
    raise ParseError(f"cannot read value literal {raw!r}", path=path)


def _parse_operand(raw, path: str):
    # Bare strings are variable references; literals use tags or scalars.
    if isinstance(raw, str):
        return VarRef(_identifier(raw, path))
    return _parse_value(raw, path)


def _parse_condition(raw, path: str, depth: int = 0) -> Condition:
    if depth > MAX_CONDITION_DEPTH:
        raise ParseError(f"condition nesting exceeds {MAX_CONDITION_DEPTH}", path=path)
    if not isinstance(raw, dict):
        raise ParseError(f"condition must be an object, got {raw!r}", path=path)
    if "all" in raw or "any" in raw:
        tag = "all" if "all" in raw else "any"
        items = raw[tag]
        if not isinstance(items, list) or not items:
            raise ParseError(f"'{tag}' requires a nonempty list", path=path)
        parsed = tuple(
            _parse_condition(item, f"{path}/{tag}/{i}", depth + 1)
            for i, item in enumerate(items)
        )
        return AllOf(parsed) if tag == "all" else AnyOf(parsed)
    op = _require(raw, "op", path)
    if op not in COMPARISON_OPS:
        raise ParseError(f"unknown comparison operator {op!r}", path=path)
    return Comparison(
        _parse_operand(_require(raw, "lhs", path), f"{path}/lhs"),
        op,
        _parse_operand(_require(raw, "rhs", path), f"{path}/rhs"),
    )


def _parse_output(raw, path: str) -> Output:
    if isinstance(raw, dict):
        if "terminal" in raw:
            return Terminal(_parse_output(raw["terminal"], f"{path}/terminal"))
        if "expr" in raw:
            if not isinstance(raw["expr"], str):
                raise ParseError("'expr' must be a string", path=path)
            return ExprOutput(raw["expr"])
        if "clause" in raw:
            return ClauseRef(_identifier(raw["clause"], f"{path}/clause"))
    return _parse_value(raw, path)


def _parse_range(raw: dict, path: str) -> RangeClause:
    brackets = []
    raw_brackets = _require(raw, "brackets", path)
    if not isinstance(raw_brackets, list) or not raw_brackets:
        raise ParseError("'brackets' requires a nonempty list", path=path)
    for i, rb in enumerate(raw_brackets):
        bpath = f"{path}/brackets/{i}"
        brackets.append(
            Bracket(
                min=_parse_decimal(_require(rb, "min", bpath), f"{bpath}/min"),
                max=_parse_decimal(_require(rb, "max", bpath), f"{bpath}/max"),
                output=_parse_value(_require(rb, "output", bpath), f"{bpath}/output"),
                label=str(rb.get("label", str(i))),
            )
        )
    above = None
    if raw.get("above_top") is not None:
        ra = raw["above_top"]
        above = AboveTopRule(
            step_size=_parse_decimal(_require(ra, "step", f"{path}/above_top"), f"{path}/above_top/step"),
            increment=_parse_decimal(
                _require(ra, "increment", f"{path}/above_top"), f"{path}/above_top/increment"
            ),
        )
    default = None
    if raw.get("default") is not None:
        default = _parse_value(raw["default"], f"{path}/default")
    scale = raw.get("boundary_scale", 2)
    return RangeClause(
        input_variable=_identifier(_require(raw, "input", path), f"{path}/input"),
        brackets=tuple(brackets),
        default=default,
        above_top_rule=above,
        boundary_scale=int(scale),
    )


def _parse_logical(raw: dict, path: str) -> LogicalClause:
    raw_cases = _require(raw, "cases", path)
    if not isinstance(raw_cases, list) or not raw_cases:
        raise ParseError("'cases' requires a nonempty list", path=path)
    cases = tuple(
        Case(
            condition=_parse_condition(_require(rc, "when", f"{path}/cases/{i}"), f"{path}/cases/{i}/when"),
            output=_parse_output(_require(rc, "then", f"{path}/cases/{i}"), f"{path}/cases/{i}/then"),
        )
        for i, rc in enumerate(raw_cases)
    )
    default = None
    if raw.get("default") is not None:
        default = _parse_output(raw["default"], f"{path}/default")
    precision = raw.get("precision")
    return LogicalClause(
        cases=cases,
        default=default,
        precision=None if precision is None else int(precision),
        rounding=raw.get("rounding", _default_rounding.get()),
    )


def _parse_pricing(raw: dict, path: str) -> PricingFormula:
    raw_steps = _require(raw, "steps", path)
    if not isinstance(raw_steps, list) or not raw_steps:
        raise ParseError("'steps' requires a nonempty list", path=path)
    subs = []
    for i, rs in enumerate(raw_steps):
        spath = f"{path}/steps/{i}"
        expression = _require(rs, "expr", spath)
        if not isinstance(expression, str):
            raise ParseError("'expr' must be a string", path=spath)
        subs.append(
            SubFormula(
                target=_identifier(_require(rs, "target", spath), f"{spath}/target"),
                expression=expression,
            )
        )
    return PricingFormula(
        sub_formulas=tuple(subs),
        result_variable=_identifier(_require(raw, "result", path), f"{path}/result"),
        precision=int(raw.get("precision", 2)),
        rounding=raw.get("rounding", _default_rounding.get()),
    )


def _parse_procedure(raw: dict, path: str) -> Tuple[ProcedureStep, ...]:
    raw_steps = _require(raw, "steps", path)
    if not isinstance(raw_steps, list) or not raw_steps:
        raise ParseError("'steps' requires a nonempty list", path=path)
    steps = []
    for i, rs in enumerate(raw_steps):
        spath = f"{path}/steps/{i}"
        name = _identifier(_require(rs, "name", spath), f"{spath}/name")
        bodies = [k for k in ("logical", "range", "pricing", "clause") if k in rs]
        if len(bodies) != 1:
            raise ParseError(
                "step needs exactly one of 'logical', 'range', 'pricing', 'clause'",
                path=spath,
            )
        tag = bodies[0]
        if tag == "logical":
            body: object = _parse_logical(rs["logical"], f"{spath}/logical")
        elif tag == "range":
            body = _parse_range(rs["range"], f"{spath}/range")
        elif tag == "pricing":
            body = _parse_pricing(rs["pricing"], f"{spath}/pricing")
        else:
            body = ClauseRef(_identifier(rs["clause"], f"{spath}/clause"))
        steps.append(
            ProcedureStep(
                name=name, body=body, terminal_on_output=bool(rs.get("terminal_on_output", False))
            )
        )
    return tuple(steps)


CLAUSE_KINDS = ("procedure", "logical", "range", "pricing")


def _parse_clause(raw: dict, path: str) -> Clause:
    name = _identifier(_require(raw, "name", path), f"{path}/name")
    kind = _require(raw, "kind", path)
    if kind not in CLAUSE_KINDS:
        raise ParseError(f"unknown clause kind '{kind}'", path=f"{path}/kind")
    body_raw = _require(raw, kind, path)
    if kind == "procedure":
        body: object = _parse_procedure(body_raw, f"{path}/{kind}")
    elif kind == "logical":
        body = _parse_logical(body_raw, f"{path}/{kind}")
    elif kind == "range":
        body = _parse_range(body_raw, f"{path}/{kind}")
    else:
        body = _parse_pricing(body_raw, f"{path}/{kind}")
    start = end = None
    if raw.get("validity_start_date") is not None:
        start = _parse_date(raw["validity_start_date"], f"{path}/validity_start_date")
    if raw.get("validity_end_date") is not None:
        end = _parse_date(raw["validity_end_date"], f"{path}/validity_end_date")
    return Clause(
        name=name,
        kind=kind,
        body=body,
        validity_start_date=start,
        validity_end_date=end,
        source_excerpt=str(raw.get("source_excerpt", "")),
    )


def _parse_variable(raw: dict, path: str) -> VariableDecl:
    name = _identifier(_require(raw, "name", path), f"{path}/name")
    source = _require(raw, "source", path)
    if source not in VARIABLE_SOURCES:
        raise ParseError(f"unknown variable source '{source}'", path=f"{path}/source")
    value_type = _require(raw, "type", path)
    if value_type not in VALUE_TYPES:
        raise ParseError(f"unknown value type '{value_type}'", path=f"{path}/type")
    enum_values = None
    if raw.get("enum") is not None:
        enum_raw = raw["enum"]
        if not isinstance(enum_raw, list) or not all(isinstance(v, str) for v in enum_raw):
            raise ParseError("'enum' must be a list of strings", path=f"{path}/enum")
        enum_values = tuple(enum_raw)
    const_value = None
    const_validity = None
    if raw.get("value") is not None:
        const_value = _parse_value(raw["value"], f"{path}/value")
    if raw.get("validity") is not None:
        windows = []
        for i, rw in enumerate(raw["validity"]):
            wpath = f"{path}/validity/{i}"
            windows.append(
                ConstWindow(
                    value=_parse_value(_require(rw, "value", wpath), f"{wpath}/value"),
                    start=_parse_date(rw["start"], f"{wpath}/start") if rw.get("start") else None,
                    end=_parse_date(rw["end"], f"{wpath}/end") if rw.get("end") else None,
                )
            )
        const_validity = tuple(windows)
    return VariableDecl(
        name=name,
        source=source,
        value_type=value_type,
        description=str(raw.get("description", "")),
        enum_values=enum_values,
        const_value=const_value,
        const_validity=const_validity,
    )


def parse_contract(
    text: Union[bytes, str], *, default_rounding: Optional[str] = None
) -> ContractDefinition:
    """Parse contract-definition bytes into the structural model.

    ``default_rounding`` overrides the rounding mode assumed for clauses
    that omit one (normally half_up).  Raises :class:`ParseError` on
    malformed input; semantic rules are checked separately by
    :func:`validate_contract`.
    """
    if default_rounding is not None:
        if default_rounding not in expr_mod.ROUNDING_MODES:
            raise ParseError(
                f"unknown rounding mode '{default_rounding}' "
                f"(expected one of: {', '.join(sorted(expr_mod.ROUNDING_MODES))})"
            )
        token = _default_rounding.set(default_rounding)
        try:
            return parse_contract(text)
        finally:
            _default_rounding.reset(token)
    if isinstance(text, bytes):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError(f"contract file is not valid UTF-8: {exc}") from None
    try:
        doc = json.loads(text, parse_float=Decimal)
    except json.JSONDecodeError as exc:
        raise ParseError(
            f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}",
            line=exc.lineno,
            column=exc.colno,
        ) from None
    if not isinstance(doc, dict):
        raise ParseError("contract file must be a JSON object")
    version = doc.get("dacl_version")
    if version != "1":
        raise ParseError(f"unsupported dacl_version {version!r} (expected \"1\")", path="dacl_version")
    contract_id = _identifier(_require(doc, "contract_id", ""), "contract_id")
    variables = tuple(
        _parse_variable(rv, f"variables/{i}") for i, rv in enumerate(doc.get("variables", []))
    )
    clauses = tuple(
        _parse_clause(rc, f"clauses/{i}") for i, rc in enumerate(_require(doc, "clauses", ""))
    )
    metadata = {str(k): str(v) for k, v in (doc.get("metadata") or {}).items()}
    return ContractDefinition(
        contract_id=contract_id, variables=variables, clauses=clauses, metadata=metadata
    )


def load_contract_file(path, *, default_rounding: Optional[str] = None) -> ContractDefinition:
    with open(path, "rb") as handle:
        return parse_contract(handle.read(), default_rounding=default_rounding)


# --- serialization (inverse of parse) ---------------------------------------


def _value_to_json(value: Value):
    if isinstance(value, bool):
        return {"boolean": value}
    if isinstance(value, Decimal):
        return {"decimal": format_value(value)}
    if isinstance(value, datetime.date):
        return {"date": value.isoformat()}
    return {"text": value}


def _operand_to_json(operand):
    if isinstance(operand, VarRef):
        return operand.name
    return _value_to_json(operand)


def _condition_to_json(cond: Condition):
    if isinstance(cond, Comparison):
        return {"lhs": _operand_to_json(cond.lhs), "op": cond.op, "rhs": _operand_to_json(cond.rhs)}
    tag = "all" if isinstance(cond, AllOf) else "any"
    return {tag: [_condition_to_json(item) for item in cond.items]}


def _output_to_json(output: Output):
    if isinstance(output, Terminal):
        return {"terminal": _output_to_json(output.output)}
    if isinstance(output, ExprOutput):
        return {"expr": output.text}
    if isinstance(output, ClauseRef):
        return {"clause": output.name}
    return _value_to_json(output)


def _range_to_json(body: RangeClause) -> dict:
    out = {
        "input": body.input_variable,
        "boundary_scale": body.boundary_scale,
        "brackets": [
            {
                "min": format_value(b.min),
                "max": format_value(b.max),
                "output": _value_to_json(b.output),
                "label": b.label,
            }
            for b in body.brackets
        ],
    }
    if body.default is not None:
        out["default"] = _value_to_json(body.default)
    if body.above_top_rule is not None:
        out["above_top"] = {
            "step": format_value(body.above_top_rule.step_size),
            "increment": format_value(body.above_top_rule.increment),
        }
    return out


def _logical_to_json(body: LogicalClause) -> dict:
    out: dict = {
        "cases": [
            {"when": _condition_to_json(c.condition), "then": _output_to_json(c.output)}
            for c in body.cases
        ]
    }
    if body.default is not None:
        out["default"] = _output_to_json(body.default)
    if body.precision is not None:
        out["precision"] = body.precision
        out["rounding"] = body.rounding
    return out


def _pricing_to_json(body: PricingFormula) -> dict:
    return {
        "result": body.result_variable,
        "precision": body.precision,
        "rounding": body.rounding,
        "steps": [{"target": s.target, "expr": s.expression} for s in body.sub_formulas],
    }


def _clause_to_json(clause: Clause) -> dict:
    out: dict = {"name": clause.name, "kind": clause.kind}
    if clause.kind == "procedure":
        steps = []
        for step in clause.body:
            rs: dict = {"name": step.name}
            if step.terminal_on_output:
                rs["terminal_on_output"] = True
            if isinstance(step.body, LogicalClause):
                rs["logical"] = _logical_to_json(step.body)
            elif isinstance(step.body, RangeClause):
                rs["range"] = _range_to_json(step.body)
            elif isinstance(step.body, PricingFormula):
                rs["pricing"] = _pricing_to_json(step.body)
            else:
                rs["clause"] = step.body.name
            steps.append(rs)
        out["procedure"] = {"steps": steps}
    elif clause.kind == "logical":
        out["logical"] = _logical_to_json(clause.body)
    elif clause.kind == "range":
        out["range"] = _range_to_json(clause.body)
    else:
        out["pricing"] = _pricing_to_json(clause.body)
    if clause.validity_start_date:
        out["validity_start_date"] = clause.validity_start_date.isoformat()
    if clause.validity_end_date:
        out["validity_end_date"] = clause.validity_end_date.isoformat()
    if clause.source_excerpt:
        out["source_excerpt"] = clause.source_excerpt
    return out


def serialize_contract(contract: ContractDefinition) -> str:
    """Render a contract back to file text; parse(serialize(c)) == c."""
    doc: dict = {
        "dacl_version": "1",
        "contract_id": contract.contract_id,
        "metadata": dict(contract.metadata),
        "variables": [],
        "clauses": [_clause_to_json(c) for c in contract.clauses],
    }
    for decl in contract.variables:
        rv: dict = {
            "name": decl.name,
            "source": decl.source,
            "type": decl.value_type,
        }
        if decl.description:
            rv["description"] = decl.description
        if decl.enum_values is not None:
            rv["enum"] = list(decl.enum_values)
        if decl.const_value is not None:
            rv["value"] = _value_to_json(decl.const_value)
        if decl.const_validity is not None:
            rv["validity"] = [
                {
                    "value": _value_to_json(w.value),
                    "start": w.start.isoformat() if w.start else None,
                    "end": w.end.isoformat() if w.end else None,
                }
                for w in decl.const_validity
            ]
        doc["variables"].append(rv)
    return json.dumps(doc, indent=2, sort_keys=False, ensure_ascii=False)


# --- reference extraction ----------------------------------------------------


def _condition_refs(cond: Condition) -> List[str]:
    return expr_mod.condition_variables(cond)


def _expression_refs(text: str) -> List[str]:
    try:
        return expr_mod.expression_variables(compiled_expression(text))
    except (ParseError, SandboxViolation):
        return []


def _output_refs(output: Output) -> List[str]:
    if isinstance(output, Terminal):
        return _output_refs(output.output)
    if isinstance(output, ExprOutput):
        return _expression_refs(output.text)
    if isinstance(output, ClauseRef):
        return [output.name]
    return []


def _body_refs(body) -> List[str]:
    """All identifiers a clause body reads (not deduplicated)."""
    refs: List[str] = []
    if isinstance(body, RangeClause):
        refs.append(body.input_variable)
    elif isinstance(body, LogicalClause):
        for case in body.cases:
            refs.extend(_condition_refs(case.condition))
            refs.extend(_output_refs(case.output))
        if body.default is not None:
            refs.extend(_output_refs(body.default))
    elif isinstance(body, PricingFormula):
        for sub in body.sub_formulas:
            refs.extend(_expression_refs(sub.expression))
    elif isinstance(body, ClauseRef):
        refs.append(body.name)
    return refs


def clause_reads(clause: Clause) -> List[str]:
    """Identifiers a clause reads from outside itself (its own sub-formula
    targets and step names are excluded)."""
    internal: Set[str] = set()
    refs: List[str] = []
    if clause.kind == "procedure":
        for step in clause.body:
            refs.extend(_body_refs(step.body))
            internal.add(step.name)
            if isinstance(step.body, PricingFormula):
                internal.update(s.target for s in step.body.sub_formulas)
    else:
        refs.extend(_body_refs(clause.body))
        if isinstance(clause.body, PricingFormula):
            internal.update(s.target for s in clause.body.sub_formulas)
    seen: Set[str] = set()
    out: List[str] = []
    for ref in refs:
        if ref in internal or ref in seen:
            continue
        seen.add(ref)
        out.append(ref)
    return out


def clause_output_type(clause: Clause) -> Optional[str]:
    """Static output type of a clause when it can be inferred."""

    def output_type(output: Output) -> Optional[str]:
        if isinstance(output, Terminal):
            return output_type(output.output)
        if isinstance(output, ExprOutput):
            return "decimal"
        if isinstance(output, ClauseRef):
            return None
        return value_type_of(output)

    def body_type(body) -> Optional[str]:
        if isinstance(body, PricingFormula):
            return "decimal"
        if isinstance(body, RangeClause):
            types = {value_type_of(b.output) for b in body.brackets}
            return types.pop() if len(types) == 1 else None
        if isinstance(body, LogicalClause):
            types = {output_type(c.output) for c in body.cases}
            if body.default is not None:
                types.add(output_type(body.default))
            types.discard(None)
            return types.pop() if len(types) == 1 else None
        return None

    if clause.kind == "procedure":
        return body_type(clause.body[-1].body) if clause.body else None
    return body_type(clause.body)


# --- validation --------------------------------------------------------------


def _check_variables(contract: ContractDefinition, report: ValidationReport) -> Dict[str, VariableDecl]:
    decls: Dict[str, VariableDecl] = {}
    for i, decl in enumerate(contract.variables):
        path = f"variables/{i}"
        if decl.name in decls:
            report.error(
                "DUPLICATE_VARIABLE", f"variable '{decl.name}' declared more than once", path
            )
            continue
        decls[decl.name] = decl
        if decl.enum_values is not None:
            if decl.value_type != "text":
                report.error(
                    "ENUM_CONST_INVALID",
                    f"variable '{decl.name}': enum values are only permitted for text variables",
                    f"{path}/enum",
                )
            elif not decl.enum_values:
                report.error(
                    "ENUM_CONST_INVALID",
                    f"variable '{decl.name}': enum list must be nonempty",
                    f"{path}/enum",
                )
        if decl.source == "const":
            has_value = decl.const_value is not None
            has_windows = decl.const_validity is not None
            if has_value == has_windows:
                report.error(
                    "CONST_VALUE_MISSING",
                    f"const variable '{decl.name}' needs exactly one of 'value' or 'validity'",
                    path,
                )
            values = []
            if has_value:
                values.append((decl.const_value, path))
            if has_windows:
                values.extend(
                    (w.value, f"{path}/validity/{j}") for j, w in enumerate(decl.const_validity)
                )
                windows = decl.const_validity
                for a in range(len(windows)):
                    for b in range(a + 1, len(windows)):
                        if _windows_overlap(windows[a].start, windows[a].end, windows[b].start, windows[b].end):
                            report.error(
                                "TEMPORAL_OVERLAP",
                                f"const variable '{decl.name}' has overlapping validity windows",
                                f"{path}/validity/{b}",
                            )
            for value, vpath in values:
                if value_type_of(value) != decl.value_type:
                    report.error(
                        "TYPE_MISMATCH",
                        f"const variable '{decl.name}' declared {decl.value_type} but its "
                        f"value is {value_type_of(value)} '{format_value(value)}'",
                        vpath,
                    )
                elif decl.enum_values and decl.value_type == "text" and value not in decl.enum_values:
                    report.error(
                        "ENUM_CONST_INVALID",
                        f"const variable '{decl.name}' value '{value}' not in enum "
                        f"{{{', '.join(sorted(decl.enum_values))}}}",
                        vpath,
                    )
        else:
            if decl.const_value is not None or decl.const_validity is not None:
                report.error(
                    "CONST_VALUE_MISSING",
                    f"variable '{decl.name}' has a const value but source '{decl.source}'",
                    path,
                )
    return decls


def _windows_overlap(a_start, a_end, b_start, b_end) -> bool:
    a_start = a_start or datetime.date.min
    a_end = a_end or datetime.date.max
    b_start = b_start or datetime.date.min
    b_end = b_end or datetime.date.max
    return a_start <= b_end and b_start <= a_end


def _check_range(body: RangeClause, path: str, report: ValidationReport) -> None:
    tick = Decimal(1).scaleb(-body.boundary_scale)
    for i, bracket in enumerate(body.brackets):
        if bracket.min > bracket.max:
            report.error(
                "BRACKET_INVERTED",
                f"bracket [{format_value(bracket.min)}, {format_value(bracket.max)}] has min > max",
                f"{path}/brackets/{i}",
            )
    ordered = sorted(
        (b for b in body.brackets if b.min <= b.max), key=lambda b: (b.min, b.max)
    )
    for a, b in zip(ordered, ordered[1:]):
        if b.min <= a.max:
            report.error(
                "RANGE_OVERLAP",
                f"brackets [{format_value(a.min)}, {format_value(a.max)}] and "
                f"[{format_value(b.min)}, {format_value(b.max)}] overlap",
                path,
            )
        elif b.min - a.max > tick and body.default is None:
            report.warn(
                "COVERAGE_GAP",
                f"gap between {format_value(a.max)} and {format_value(b.min)} "
                "has no bracket and no default",
                path,
            )
    if ordered and body.default is None:
        report.warn(
            "COVERAGE_GAP",
            f"inputs below {format_value(ordered[0].min)} have no bracket and no default",
            path,
        )
        if body.above_top_rule is None:
            report.warn(
                "COVERAGE_GAP",
                f"inputs above {format_value(ordered[-1].max)} have no bracket, "
                "no extrapolation rule and no default",
                path,
            )


def _check_temporal(contract: ContractDefinition, report: ValidationReport) -> None:
    for name in contract.clause_names():
        versions = version_chain(contract, name)
        if len(versions) == 1 and versions[0].validity_start_date is None and versions[0].validity_end_date is None:
            continue  # lone undated clause is always-active
        for i, version in enumerate(versions):
            start, end = version.validity_start_date, version.validity_end_date
            if start and end and start > end:
                report.error(
                    "TEMPORAL_OVERLAP",
                    f"clause '{name}' version has start {start} after end {end}",
                    f"clause:{name}/version/{i}",
                )
            if end is None and i != len(versions) - 1:
                report.error(
                    "OPEN_ENDED_CONFLICT",
                    f"clause '{name}': only the chronologically latest version may omit an end date",
                    f"clause:{name}/version/{i}",
                )
        for i, (a, b) in enumerate(zip(versions, versions[1:])):
            a_end = a.validity_end_date
            b_start = b.validity_start_date
            if a_end is None or b_start is None:
                # overlap via an open end is caught above; open start overlaps here
                if b_start is None:
                    report.error(
                        "TEMPORAL_OVERLAP",
                        f"clause '{name}': versions {i} and {i + 1} overlap",
                        f"clause:{name}/version/{i + 1}",
                    )
                continue
            if b_start <= a_end:
                report.error(
                    "TEMPORAL_OVERLAP",
                    f"clause '{name}': version starting {b_start} overlaps version ending {a_end}",
                    f"clause:{name}/version/{i + 1}",
                )
            elif b_start - a_end > ONE_DAY:
                report.error(
                    "TEMPORAL_GAP",
                    f"clause '{name}': no version covers {a_end + ONE_DAY} .. {b_start - ONE_DAY}",
                    f"clause:{name}/version/{i + 1}",
                )


def _static_types(
    decls: Dict[str, VariableDecl], contract: ContractDefinition
) -> Dict[str, Optional[str]]:
    types: Dict[str, Optional[str]] = {name: d.value_type for name, d in decls.items()}
    for name in contract.clause_names():
        inferred = {clause_output_type(v) for v in version_chain(contract, name)}
        inferred.discard(None)
        types[name] = inferred.pop() if len(inferred) == 1 else None
    return types


def _operand_type(operand, types: Dict[str, Optional[str]]) -> Optional[str]:
    if isinstance(operand, VarRef):
        return types.get(operand.name)
    return value_type_of(operand)


def _check_condition_types(
    cond: Condition, types: Dict[str, Optional[str]], path: str, report: ValidationReport
) -> None:
    if isinstance(cond, Comparison):
        lt = _operand_type(cond.lhs, types)
        rt = _operand_type(cond.rhs, types)
        if lt is None or rt is None:
            return
        if cond.op in ORDERING_OPS:
            if lt != rt or lt not in ("decimal", "date"):
                report.error(
                    "TYPE_MISMATCH",
                    f"operator '{cond.op}' requires two decimals or two dates, got {lt} and {rt}",
                    path,
                )
        elif lt != rt:
            report.error("TYPE_MISMATCH", f"cannot compare {lt} with {rt}", path)
        return
    for i, item in enumerate(getattr(cond, "items")):
        tag = "all" if isinstance(cond, AllOf) else "any"
        _check_condition_types(item, types, f"{path}/{tag}/{i}", report)


def _check_expression(
    text: str,
    readable: Set[str],
    types: Dict[str, Optional[str]],
    path: str,
    report: ValidationReport,
    forward: Set[str] = frozenset(),
) -> None:
    try:
        parsed = compiled_expression(text)
    except SandboxViolation as exc:
        report.error("SANDBOX_VIOLATION", exc.message, path)
        return
    except ParseError as exc:
        report.error("PARSE_ERROR", f"invalid expression: {exc.message}", path)
        return
    for name in expr_mod.expression_variables(parsed):
        if name in forward:
            report.error(
                "FORWARD_STEP_REFERENCE",
                f"expression reads '{name}' before it is produced",
                path,
            )
        elif name not in readable:
            report.error("UNRESOLVED_VARIABLE", f"unresolved reference '{name}'", path)
        elif types.get(name) not in (None, "decimal"):
            report.error(
                "TYPE_MISMATCH",
                f"expression reads '{name}' which is {types[name]}, expected decimal",
                path,
            )


def _check_clause_body(
    body,
    readable: Set[str],
    forward: Set[str],
    types: Dict[str, Optional[str]],
    clause_names: Set[str],
    path: str,
    report: ValidationReport,
) -> None:
    def check_ref(name: str, rpath: str) -> None:
        if name in forward:
            report.error(
                "FORWARD_STEP_REFERENCE", f"reference to '{name}' before it is produced", rpath
            )
        elif name not in readable:
            report.error("UNRESOLVED_VARIABLE", f"unresolved reference '{name}'", rpath)

    def check_output(output: Output, opath: str) -> None:
        if isinstance(output, Terminal):
            check_output(output.output, opath)
        elif isinstance(output, ExprOutput):
            _check_expression(output.text, readable, types, opath, report, forward)
        elif isinstance(output, ClauseRef):
            if output.name not in clause_names:
                report.error(
                    "UNRESOLVED_VARIABLE", f"unknown clause reference '{output.name}'", opath
                )

    if isinstance(body, RangeClause):
        check_ref(body.input_variable, f"{path}/input")
        if body.input_variable in readable and types.get(body.input_variable) not in (None, "decimal"):
            report.error(
                "TYPE_MISMATCH",
                f"range input '{body.input_variable}' is {types[body.input_variable]}, expected decimal",
                f"{path}/input",
            )
        _check_range(body, path, report)
    elif isinstance(body, LogicalClause):
        for i, case in enumerate(body.cases):
            for name in _condition_refs(case.condition):
                check_ref(name, f"{path}/cases/{i}/when")
            _check_condition_types(case.condition, types, f"{path}/cases/{i}/when", report)
            check_output(case.output, f"{path}/cases/{i}/then")
        if body.default is not None:
            check_output(body.default, f"{path}/default")
        if body.rounding not in expr_mod.ROUNDING_MODES:
            report.error("PARSE_ERROR", f"unknown rounding mode '{body.rounding}'", path)
    elif isinstance(body, PricingFormula):
        if body.rounding not in expr_mod.ROUNDING_MODES:
            report.error("PARSE_ERROR", f"unknown rounding mode '{body.rounding}'", path)
        targets = [s.target for s in body.sub_formulas]
        if body.result_variable not in targets:
            report.error(
                "MISSING_RESULT_VARIABLE",
                f"result variable '{body.result_variable}' is not the target of any sub-formula",
                path,
            )
        earlier: Set[str] = set()
        later = set(targets)
        for i, sub in enumerate(body.sub_formulas):
            later.discard(sub.target)
            _check_expression(
                sub.expression,
                readable | earlier,
                types,
                f"{path}/steps/{i}",
                report,
                forward | later | {sub.target},
            )
            earlier.add(sub.target)
    elif isinstance(body, ClauseRef):
        if body.name not in clause_names:
            report.error("UNRESOLVED_VARIABLE", f"unknown clause reference '{body.name}'", path)


def validate_contract(contract: ContractDefinition) -> ValidationReport:
    """Run every load-time rule; findings are data, never exceptions."""
    report = ValidationReport()
    decls = _check_variables(contract, report)
    clause_names = set(contract.clause_names())
    types = _static_types(decls, contract)
    base_readable = {
        name for name, d in decls.items() if d.source in ("external", "const")
    } | clause_names

    produced: Set[str] = set(clause_names)
    for clause in contract.clauses:
        if clause.kind == "procedure":
            for step in clause.body:
                produced.add(step.name)
                if isinstance(step.body, PricingFormula):
                    produced.update(s.target for s in step.body.sub_formulas)
        elif clause.kind == "pricing":
            produced.update(s.target for s in clause.body.sub_formulas)
    for name, decl in decls.items():
        if decl.source == "derived" and name not in produced:
            report.warn(
                "UNRESOLVED_VARIABLE",
                f"derived variable '{name}' is never produced by any clause or step",
                f"variable:{name}",
            )

    for ci, clause in enumerate(contract.clauses):
        path = f"clauses/{ci}"
        if clause.kind == "procedure":
            step_names = [s.name for s in clause.body]
            if len(step_names) != len(set(step_names)):
                report.error(
                    "DUPLICATE_VARIABLE",
                    f"procedure '{clause.name}' has duplicate step names",
                    path,
                )
            earlier: Set[str] = set()
            remaining = set(step_names)
            for si, step in enumerate(clause.body):
                remaining.discard(step.name)
                _check_clause_body(
                    step.body,
                    base_readable | earlier,
                    set(remaining) | {step.name},
                    types,
                    clause_names,
                    f"{path}/procedure/steps/{si}",
                    report,
                )
                earlier.add(step.name)
                if isinstance(step.body, PricingFormula):
                    earlier.update(s.target for s in step.body.sub_formulas)
        else:
            _check_clause_body(
                clause.body, base_readable, set(), types, clause_names, f"{path}/{clause.kind}", report
            )

    _check_temporal(contract, report)

    try:
        dependency_graph(contract)
    except CyclicDependency as exc:
        report.error("DEPENDENCY_CYCLE", exc.message, "clauses")

    return report


# --- dependency graph --------------------------------------------------------


def dependency_graph(contract: ContractDefinition) -> List[str]:
    """Topological order over every produced identifier (clause names,
    procedure steps, sub-formula targets); each node appears after all
    identifiers it reads.  Raises :class:`CyclicDependency` listing the
    cycle."""
    deps: Dict[str, Set[str]] = {}
    order_hint: List[str] = []

    def node(name: str) -> Set[str]:
        if name not in deps:
            deps[name] = set()
            order_hint.append(name)
        return deps[name]

    def add_pricing(body: PricingFormula, owner: str) -> None:
        for sub in body.sub_formulas:
            node(sub.target).update(_expression_refs(sub.expression))
        node(owner).update(s.target for s in body.sub_formulas)

    for name in contract.clause_names():
        node(name)
        for version in version_chain(contract, name):
            if version.kind == "procedure":
                for step in version.body:
                    node(step.name).update(_body_refs(step.body))
                    if isinstance(step.body, PricingFormula):
                        add_pricing(step.body, step.name)
                    node(name).add(step.name)
            elif version.kind == "pricing":
                add_pricing(version.body, name)
            else:
                node(name).update(_body_refs(version.body))

    produced = set(deps)

    result: List[str] = []
    state: Dict[str, int] = {}  # 0 visiting, 1 done

    def visit(target: str, stack: List[str]) -> None:
        mark = state.get(target)
        if mark == 1:
            return
        if mark == 0:
            cycle = stack[stack.index(target):] + [target]
            raise CyclicDependency(cycle)
        state[target] = 0
        stack.append(target)
        for dep in sorted(deps[target] & produced):
            visit(dep, stack)
        stack.pop()
        state[target] = 1
        result.append(target)

    for name in order_hint:
        visit(name, [])
    return result
