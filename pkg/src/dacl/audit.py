"""Audit trails: structure, canonical serialization, rendering, coverage.

Every evaluation produces a trail with four sections: variable states,
decision points, formula breakdowns and the execution path.  The trail is
self-contained — replaying the recorded comparisons and substituted
formulas reproduces the recorded outputs without consulting the contract.
"""

from __future__ import annotations

import datetime
import json
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Dict, List, Optional, Sequence, Tuple

from .errors import ForeignTrace
from .expr import AtomRecord
from .model import (
    Clause,
    ContractDefinition,
    LogicalClause,
    ProcedureStep,
    RangeClause,
    Value,
    format_value,
    version_chain,
)


@dataclass(frozen=True)
class VariableState:
    name: str
    declared_type: str
    raw: Optional[str]
    coerced: str
    outcome: str  # ok | injected | derived


@dataclass(frozen=True)
class DecisionPoint:
    clause: str
    version: str  # validity window of the version that ran
    kind: str  # logical | range
    matched: str  # "case:<i>" | "bracket:<label>" | "above_top:+<n>" | "default" | "no-match"
    atoms: Tuple[AtomRecord, ...] = ()


@dataclass(frozen=True)
class FormulaStep:
    clause: str
    target: str
    expression: str
    inputs: Tuple[Tuple[str, str], ...]  # (name, value) sorted by name
    value: str
    rounding: str  # e.g. "2:half_up" or "-"


@dataclass(frozen=True)
class PathEntry:
    clause: str
    version: str
    step: str = ""  # procedure step name, empty otherwise


@dataclass(frozen=True)
class AuditTrail:
    variable_states: Tuple[VariableState, ...]
    decision_points: Tuple[DecisionPoint, ...]
    formula_breakdown: Tuple[FormulaStep, ...]
    execution_path: Tuple[PathEntry, ...]

    def to_dict(self) -> dict:
        return {
            "variable_states": [
                {
                    "name": s.name,
                    "declared_type": s.declared_type,
                    "raw": s.raw,
                    "coerced": s.coerced,
                    "outcome": s.outcome,
                }
                for s in self.variable_states
            ],
            "decision_points": [
                {
                    "clause": d.clause,
                    "version": d.version,
                    "kind": d.kind,
                    "matched": d.matched,
                    "atoms": [
                        {
                            "lhs": a.lhs,
                            "op": a.op,
                            "rhs": a.rhs,
                            "lhs_value": a.lhs_value,
                            "rhs_value": a.rhs_value,
                            "result": a.result,
                        }
                        for a in d.atoms
                    ],
                }
                for d in self.decision_points
            ],
            "formula_breakdown": [
                {
                    "clause": f.clause,
                    "target": f.target,
                    "expression": f.expression,
                    "inputs": {k: v for k, v in f.inputs},
                    "value": f.value,
                    "rounding": f.rounding,
                }
                for f in self.formula_breakdown
            ],
            "execution_path": [
                {"clause": p.clause, "version": p.version, "step": p.step}
                for p in self.execution_path
            ],
        }


class TrailBuilder:
    """Mutable accumulator owned by a single evaluation."""

    def __init__(self) -> None:
        self.variable_states: List[VariableState] = []
        self.decision_points: List[DecisionPoint] = []
        self.formula_breakdown: List[FormulaStep] = []
        self.execution_path: List[PathEntry] = []
        self._seen_variables: set = set()

    def record_variable(
        self, name: str, declared_type: str, raw: Optional[str], coerced: Value, outcome: str
    ) -> None:
        if name in self._seen_variables:
            return
        self._seen_variables.add(name)
        self.variable_states.append(
            VariableState(name, declared_type, raw, format_value(coerced), outcome)
        )

    def record_decision(
        self,
        clause: str,
        version: str,
        kind: str,
        matched: str,
        atoms: Sequence[AtomRecord] = (),
    ) -> None:
        self.decision_points.append(
            DecisionPoint(clause, version, kind, matched, tuple(atoms))
        )

    def record_formula(
        self,
        clause: str,
        target: str,
        expression: str,
        inputs: Dict[str, Decimal],
        value: Value,
        rounding: str,
    ) -> None:
        pairs = tuple(sorted((k, format_value(v)) for k, v in inputs.items()))
        self.formula_breakdown.append(
            FormulaStep(clause, target, expression, pairs, format_value(value), rounding)
        )

    def record_path(self, clause: str, version: str, step: str = "") -> None:
        self.execution_path.append(PathEntry(clause, version, step))

    def build(self) -> AuditTrail:
        return AuditTrail(
            tuple(self.variable_states),
            tuple(self.decision_points),
            tuple(self.formula_breakdown),
            tuple(self.execution_path),
        )


def canonical_serialize(trail: AuditTrail) -> bytes:
    """Stable bytes: sorted keys, fixed separators, decimals already
    rendered as fixed-point strings.  Equal trails give equal bytes."""
    return json.dumps(
        trail.to_dict(), sort_keys=True, separators=(",", ":"), ensure_ascii=False
    ).encode("utf-8")


def trail_from_dict(data: dict) -> AuditTrail:
    """Inverse of :meth:`AuditTrail.to_dict` (for saved trace files)."""
    return AuditTrail(
        tuple(
            VariableState(s["name"], s["declared_type"], s["raw"], s["coerced"], s["outcome"])
            for s in data.get("variable_states", [])
        ),
        tuple(
            DecisionPoint(
                d["clause"],
                d["version"],
                d["kind"],
                d["matched"],
                tuple(
                    AtomRecord(
                        a["lhs"], a["op"], a["rhs"], a["lhs_value"], a["rhs_value"], a["result"]
                    )
                    for a in d.get("atoms", [])
                ),
            )
            for d in data.get("decision_points", [])
        ),
        tuple(
            FormulaStep(
                f["clause"],
                f["target"],
                f["expression"],
                tuple(sorted(f.get("inputs", {}).items())),
                f["value"],
                f["rounding"],
            )
            for f in data.get("formula_breakdown", [])
        ),
        tuple(
            PathEntry(p["clause"], p["version"], p.get("step", ""))
            for p in data.get("execution_path", [])
        ),
    )


def render_trace(trail: AuditTrail, contract: Optional[ContractDefinition] = None) -> str:
    """Best-effort human rendering, one section per execution-path entry.

    Only the canonical JSON form is stable across versions.
    """
    excerpts: Dict[str, str] = {}
    if contract is not None:
        for clause in contract.clauses:
            if clause.source_excerpt:
                excerpts.setdefault(clause.name, clause.source_excerpt)

    lines: List[str] = []
    if trail.variable_states:
        lines.append("variables:")
        for s in trail.variable_states:
            raw = "" if s.raw is None else f" (raw {s.raw!r})"
            lines.append(f"  {s.name}: {s.declared_type} = {s.coerced}{raw} [{s.outcome}]")

    for entry in trail.execution_path:
        header = entry.clause if not entry.step else f"{entry.clause} / step {entry.step}"
        lines.append(f"== {header} [{entry.version}] ==")
        excerpt = excerpts.get(entry.clause)
        if excerpt:
            lines.append(f'  source: "{excerpt}"')
        for d in trail.decision_points:
            if d.clause != entry.clause:
                continue
            lines.append(f"  {d.clause}: {d.kind} -> {d.matched}")
            for a in d.atoms:
                mark = "true" if a.result else "false"
                lines.append(
                    f"    {a.lhs} {a.op} {a.rhs}"
                    f"  [{a.lhs_value} {a.op} {a.rhs_value}] = {mark}"
                )
        for f in trail.formula_breakdown:
            if f.clause != entry.clause:
                continue
            substituted = f.expression
            for name, value in sorted(f.inputs, key=lambda kv: -len(kv[0])):
                substituted = substituted.replace(name, value)
            lines.append(f"  {f.target} = {f.expression}")
            lines.append(f"    {substituted} = {f.value}  (rounding {f.rounding})")
    return "\n".join(lines) + "\n"


# --- coverage ----------------------------------------------------------------


@dataclass(frozen=True)
class ClauseCoverage:
    clause: str
    hit: Tuple[str, ...]
    declared: Tuple[str, ...]

    @property
    def fraction(self) -> float:
        return len(self.hit) / len(self.declared) if self.declared else 1.0


@dataclass(frozen=True)
class CoverageReport:
    per_clause: Dict[str, ClauseCoverage]
    hit_total: int
    state_total: int

    @property
    def fraction(self) -> float:
        return self.hit_total / self.state_total if self.state_total else 1.0

    def to_dict(self) -> dict:
        return {
            "per_clause": {
                name: {
                    "hit": list(c.hit),
                    "declared": list(c.declared),
                    "fraction": c.fraction,
                }
                for name, c in sorted(self.per_clause.items())
            },
            "hit": self.hit_total,
            "total": self.state_total,
            "fraction": self.fraction,
        }


def _version_states(clause: Clause, multi: bool) -> List[str]:
    """State keys for one clause version.

    Logical cases and range brackets are each a state; a version with
    neither (pure pricing/procedure path) is itself one state.
    """
    prefix = f"{clause.window()}|" if multi else ""
    states: List[str] = []

    def from_body(body) -> None:
        if isinstance(body, LogicalClause):
            states.extend(f"{prefix}case:{i}" for i in range(len(body.cases)))
        elif isinstance(body, RangeClause):
            states.extend(f"{prefix}bracket:{b.label}" for b in body.brackets)

    if clause.kind == "procedure":
        for step in clause.body:
            if isinstance(step.body, (LogicalClause, RangeClause)):
                from_body(step.body)
    else:
        from_body(clause.body)
    if not states:
        states.append(f"{prefix}run" if multi else "run")
    return states


def declared_states(contract: ContractDefinition) -> Dict[str, List[str]]:
    """Full decision-state space per clause name."""
    out: Dict[str, List[str]] = {}
    for name in contract.clause_names():
        versions = version_chain(contract, name)
        multi = len(versions) > 1
        keys: List[str] = []
        for version in versions:
            keys.extend(_version_states(version, multi))
        out[name] = keys
    return out


def trace_coverage(
    traces: Sequence[AuditTrail],
    contract: ContractDefinition,
    unreachable: Optional[Dict[str, Sequence[str]]] = None,
) -> CoverageReport:
    """Which declared decision states the given trails actually visited.

    ``unreachable`` removes explicitly declared unreachable state keys
    from the denominator.
    """
    declared = declared_states(contract)
    if unreachable:
        for name, keys in unreachable.items():
            declared[name] = [k for k in declared.get(name, []) if k not in set(keys)]
    known = set(declared)
    multi = {name: len(version_chain(contract, name)) > 1 for name in known}

    hits: Dict[str, set] = {name: set() for name in declared}
    for trail in traces:
        for d in trail.decision_points:
            if d.clause not in known:
                raise ForeignTrace(
                    f"trace references unknown clause '{d.clause}'", clause=d.clause
                )
            prefix = f"{d.version}|" if multi[d.clause] else ""
            key = f"{prefix}{d.matched}"
            if key in declared[d.clause]:
                hits[d.clause].add(key)
        for p in trail.execution_path:
            if p.clause not in known:
                raise ForeignTrace(
                    f"trace references unknown clause '{p.clause}'", clause=p.clause
                )
            prefix = f"{p.version}|" if multi[p.clause] else ""
            key = f"{prefix}run"
            if key in declared[p.clause]:
                hits[p.clause].add(key)

    per_clause = {
        name: ClauseCoverage(
            name,
            tuple(sorted(hits[name])),
            tuple(declared[name]),
        )
        for name in declared
    }
    hit_total = sum(len(c.hit) for c in per_clause.values())
    state_total = sum(len(c.declared) for c in per_clause.values())
    return CoverageReport(per_clause, hit_total, state_total)
