"""Seeded event generation sweeping every decision state of a contract.

The generator is constructive: for each decision state (logical case,
range bracket, or dated clause version) it builds facts that satisfy the
state's conditions, steers clear of earlier first-match cases by negating
one of their free atoms, fills the remaining externals from the fixture
manifest's domains, and verifies the intended state is the one actually
reached.  Same (contract, manifest, seed, counts) always yields the same
event list.
"""

from __future__ import annotations

import copy
import datetime
import json
import random
from dataclasses import dataclass, field, replace
from decimal import Decimal
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

from ..errors import UnreachableState
from ..expr import compare_values
from ..model import (
    AllOf,
    AnyOf,
    Bracket,
    Clause,
    Comparison,
    Condition,
    ContractDefinition,
    LogicalClause,
    RangeClause,
    Value,
    VarRef,
    VariableDecl,
    declared_variables,
    format_value,
    version_chain,
)
from .oracles import GoldOracle, OracleGap

_MAX_TRIES = 500


@dataclass(frozen=True)
class EventRecord:
    event_id: str
    contract_id: str
    facts: Dict[str, str]
    evaluation_date: datetime.date
    clause_names: Tuple[str, ...]
    narrative: str = ""
    expected: Optional[Dict[str, Value]] = None

    def to_json_line(self) -> str:
        doc: dict = {
            "event_id": self.event_id,
            "contract_id": self.contract_id,
            "facts": self.facts,
            "evaluation_date": self.evaluation_date.isoformat(),
            "clause_names": list(self.clause_names),
            "narrative": self.narrative,
        }
        if self.expected is not None:
            doc["expected"] = {k: _value_tag(v) for k, v in self.expected.items()}
        return json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=False)

    @staticmethod
    def from_json_line(line: str) -> "EventRecord":
        doc = json.loads(line)
        expected = None
        if doc.get("expected") is not None:
            expected = {k: _value_untag(v) for k, v in doc["expected"].items()}
        return EventRecord(
            event_id=doc["event_id"],
            contract_id=doc["contract_id"],
            facts={str(k): str(v) for k, v in doc["facts"].items()},
            evaluation_date=datetime.date.fromisoformat(doc["evaluation_date"]),
            clause_names=tuple(doc["clause_names"]),
            narrative=doc.get("narrative", ""),
            expected=expected,
        )


def _value_tag(value: Value) -> dict:
    if isinstance(value, bool):
        return {"boolean": value}
    if isinstance(value, Decimal):
        return {"decimal": format_value(value)}
    if isinstance(value, datetime.date):
        return {"date": value.isoformat()}
    return {"text": value}


def _value_untag(doc: dict) -> Value:
    tag, inner = next(iter(doc.items()))
    if tag == "decimal":
        return Decimal(inner)
    if tag == "date":
        return datetime.date.fromisoformat(inner)
    return inner


@dataclass(frozen=True)
class FixtureManifest:
    """Fixture metadata: default clause set, variable domains, dates,
    declared unreachable states and the narrative template."""

    contract_id: str
    contract_file: str
    oracle: str
    clause_names: Tuple[str, ...]
    date_range: Tuple[datetime.date, datetime.date]
    domains: Dict[str, dict]
    unreachable_states: Dict[str, Tuple[str, ...]] = field(default_factory=dict)
    narrative: str = ""
    notes: str = ""

    @staticmethod
    def from_json(text: Union[str, bytes]) -> "FixtureManifest":
        doc = json.loads(text)
        start, end = doc["date_range"]
        return FixtureManifest(
            contract_id=doc["contract_id"],
            contract_file=doc["contract"],
            oracle=doc["oracle"],
            clause_names=tuple(doc["clauses"]),
            date_range=(datetime.date.fromisoformat(start), datetime.date.fromisoformat(end)),
            domains=dict(doc.get("domains", {})),
            unreachable_states={
                k: tuple(v) for k, v in doc.get("unreachable_states", {}).items()
            },
            narrative=doc.get("narrative", ""),
            notes=doc.get("notes", ""),
        )


# --- decision-state targets --------------------------------------------------


@dataclass(frozen=True)
class StateTarget:
    clause: str
    version: Clause
    kind: str  # case | bracket | run
    case_index: int = -1
    bracket: Optional[Bracket] = None

    @property
    def key(self) -> str:
        if self.kind == "case":
            return f"case:{self.case_index}"
        if self.kind == "bracket":
            return f"bracket:{self.bracket.label}"
        return "run"


def _logical_of(version: Clause) -> Optional[LogicalClause]:
    if version.kind == "logical":
        return version.body
    if version.kind == "procedure":
        for step in version.body:
            if isinstance(step.body, LogicalClause):
                return step.body
    return None


def _range_of(version: Clause) -> Optional[RangeClause]:
    if version.kind == "range":
        return version.body
    if version.kind == "procedure":
        for step in version.body:
            if isinstance(step.body, RangeClause):
                return step.body
    return None


def state_targets(contract: ContractDefinition) -> List[StateTarget]:
    """Every decision state of the contract, in declaration order."""
    targets: List[StateTarget] = []
    for name in contract.clause_names():
        for version in version_chain(contract, name):
            logical = _logical_of(version)
            rng_body = _range_of(version)
            had = False
            if logical is not None:
                targets.extend(
                    StateTarget(name, version, "case", case_index=i)
                    for i in range(len(logical.cases))
                )
                had = True
            if rng_body is not None:
                targets.extend(
                    StateTarget(name, version, "bracket", bracket=b)
                    for b in rng_body.brackets
                )
                had = True
            if not had:
                targets.append(StateTarget(name, version, "run"))
    return targets


# --- constraint accumulation -------------------------------------------------


class _Conflict(Exception):
    pass


@dataclass
class _DecimalConstraint:
    lo: Decimal
    hi: Decimal
    scale: int
    excluded: set = field(default_factory=set)

    def tick(self) -> Decimal:
        return Decimal(1).scaleb(-self.scale)

    def pin(self, value: Decimal) -> None:
        self.narrow(value, value)

    def narrow(self, lo: Optional[Decimal], hi: Optional[Decimal]) -> None:
        if lo is not None and lo > self.lo:
            self.lo = lo
        if hi is not None and hi < self.hi:
            self.hi = hi
        if self.lo > self.hi:
            raise _Conflict()

    def sample(self, rng: random.Random) -> Decimal:
        tick = self.tick()
        lo_ticks = int((self.lo / tick).to_integral_value(rounding="ROUND_CEILING"))
        hi_ticks = int((self.hi / tick).to_integral_value(rounding="ROUND_FLOOR"))
        if lo_ticks > hi_ticks:
            raise _Conflict()
        for _ in range(50):
            value = Decimal(rng.randint(lo_ticks, hi_ticks)) * tick
            if value not in self.excluded:
                return value
        raise _Conflict()


@dataclass
class _ChoiceConstraint:
    allowed: List[object]

    def pin(self, value: object) -> None:
        if value not in self.allowed:
            raise _Conflict()
        self.allowed = [value]

    def exclude(self, value: object) -> None:
        remaining = [v for v in self.allowed if v != value]
        if not remaining:
            raise _Conflict()
        self.allowed = remaining

    def sample(self, rng: random.Random) -> object:
        return rng.choice(self.allowed)


class _FactBuilder:
    def __init__(
        self,
        decls: Mapping[str, VariableDecl],
        domains: Mapping[str, dict],
        rng: random.Random,
    ) -> None:
        self.decls = decls
        self.domains = domains
        self.rng = rng
        self.constraints: Dict[str, object] = {}

    def constraint(self, name: str):
        if name in self.constraints:
            return self.constraints[name]
        decl = self.decls.get(name)
        if decl is None:
            raise _Conflict()
        if decl.value_type == "decimal":
            domain = self.domains.get(name, {})
            c: object = _DecimalConstraint(
                lo=Decimal(str(domain.get("min", "0"))),
                hi=Decimal(str(domain.get("max", "1000000"))),
                scale=int(domain.get("scale", 2)),
            )
        elif decl.value_type == "boolean":
            c = _ChoiceConstraint([False, True])
        elif decl.value_type == "text":
            choices = list(decl.enum_values or self.domains.get(name, {}).get("choices", []))
            if not choices:
                raise _Conflict()
            c = _ChoiceConstraint(choices)
        else:
            raise _Conflict()  # date facts unsupported; dates flow via evaluation_date
        self.constraints[name] = c
        return c

    def apply_atom(self, atom: Comparison, negate: bool = False) -> None:
        # Only var-vs-literal atoms constrain; anything else relies on retry.
        if isinstance(atom.lhs, VarRef) and not isinstance(atom.rhs, VarRef):
            name, literal, op = atom.lhs.name, atom.rhs, atom.op
        elif isinstance(atom.rhs, VarRef) and not isinstance(atom.lhs, VarRef):
            flip = {"<": ">", "<=": ">=", ">": "<", ">=": "<=", "=": "=", "!=": "!="}
            name, literal, op = atom.rhs.name, atom.lhs, flip[atom.op]
        else:
            return
        if negate:
            negations = {"=": "!=", "!=": "=", "<": ">=", "<=": ">", ">": "<=", ">=": "<"}
            op = negations[op]
        c = self.constraint(name)
        if isinstance(c, _DecimalConstraint):
            if not isinstance(literal, Decimal):
                raise _Conflict()
            tick = c.tick()
            if op == "=":
                c.pin(literal)
            elif op == "!=":
                c.excluded.add(literal)
            elif op == "<":
                c.narrow(None, literal - tick)
            elif op == "<=":
                c.narrow(None, literal)
            elif op == ">":
                c.narrow(literal + tick, None)
            elif op == ">=":
                c.narrow(literal, None)
        elif isinstance(c, _ChoiceConstraint):
            if op == "=":
                c.pin(literal)
            elif op == "!=":
                c.exclude(literal)
            else:
                raise _Conflict()

    def apply_condition(self, cond: Condition) -> None:
        if isinstance(cond, Comparison):
            self.apply_atom(cond)
        elif isinstance(cond, AllOf):
            for item in cond.items:
                self.apply_condition(item)
        elif isinstance(cond, AnyOf):
            self.apply_condition(cond.items[0])

    def negate_one_free_atom(self, cond: Condition, pinned: set) -> None:
        """Steer away from an earlier first-match case by violating one of
        its atoms over a variable the target does not constrain."""
        for atom in _flatten_atoms(cond):
            name = None
            if isinstance(atom.lhs, VarRef) and not isinstance(atom.rhs, VarRef):
                name = atom.lhs.name
            elif isinstance(atom.rhs, VarRef) and not isinstance(atom.lhs, VarRef):
                name = atom.rhs.name
            if name is None or name in pinned:
                continue
            snapshot = copy.deepcopy(self.constraints)
            try:
                self.apply_atom(atom, negate=True)
                return
            except _Conflict:
                self.constraints = snapshot  # roll back any partial narrowing
                continue
        # no free atom: the earlier case may still miss at random; retry handles it

    def sample(self, names: Sequence[str]) -> Dict[str, Value]:
        values: Dict[str, Value] = {}
        for name in names:
            c = self.constraint(name)
            values[name] = c.sample(self.rng)  # type: ignore[union-attr]
        return values


def _flatten_atoms(cond: Condition) -> List[Comparison]:
    if isinstance(cond, Comparison):
        return [cond]
    out: List[Comparison] = []
    for item in cond.items:
        out.extend(_flatten_atoms(item))
    return out


def _condition_holds(cond: Condition, values: Mapping[str, Value]) -> bool:
    if isinstance(cond, Comparison):
        def resolve(operand):
            if isinstance(operand, VarRef):
                if operand.name not in values:
                    raise _Conflict()
                return values[operand.name]
            return operand

        return compare_values(resolve(cond.lhs), cond.op, resolve(cond.rhs))
    if isinstance(cond, AllOf):
        return all(_condition_holds(item, values) for item in cond.items)
    return any(_condition_holds(item, values) for item in cond.items)


def _matched_state(version: Clause, values: Mapping[str, Value]) -> Dict[str, str]:
    """Which state keys the given facts would reach in this version."""
    out: Dict[str, str] = {}
    logical = _logical_of(version)
    if logical is not None:
        for i, case in enumerate(logical.cases):
            if _condition_holds(case.condition, values):
                out["case"] = f"case:{i}"
                break
    rng_body = _range_of(version)
    if rng_body is not None:
        x = values.get(rng_body.input_variable)
        if isinstance(x, Decimal):
            for bracket in rng_body.brackets:
                if bracket.min <= x <= bracket.max:
                    out["bracket"] = f"bracket:{bracket.label}"
                    break
    return out


# --- generation --------------------------------------------------------------


def _external_names(decls: Mapping[str, VariableDecl]) -> List[str]:
    return [name for name, d in decls.items() if d.source == "external"]


def _sample_date(
    rng: random.Random,
    version: Clause,
    date_range: Tuple[datetime.date, datetime.date],
) -> datetime.date:
    start, end = date_range
    if version.validity_start_date and version.validity_start_date > start:
        start = version.validity_start_date
    if version.validity_end_date and version.validity_end_date < end:
        end = version.validity_end_date
    if start > end:
        raise _Conflict()
    return start + datetime.timedelta(days=rng.randint(0, (end - start).days))


def _build_event(
    contract: ContractDefinition,
    manifest: FixtureManifest,
    decls: Mapping[str, VariableDecl],
    target: StateTarget,
    rng: random.Random,
    pinned_input: Optional[Decimal] = None,
) -> Tuple[Dict[str, Value], datetime.date]:
    """Construct facts reaching ``target``; raises UnreachableState after
    exhausting the retry budget."""
    for _ in range(_MAX_TRIES):
        builder = _FactBuilder(decls, manifest.domains, rng)
        try:
            pinned: set = set()
            logical = _logical_of(target.version)
            if target.kind == "case":
                assert logical is not None
                condition = logical.cases[target.case_index].condition
                builder.apply_condition(condition)
                pinned = {a.lhs.name for a in _flatten_atoms(condition) if isinstance(a.lhs, VarRef)}
                pinned |= {a.rhs.name for a in _flatten_atoms(condition) if isinstance(a.rhs, VarRef)}
                for j in range(target.case_index):
                    builder.negate_one_free_atom(logical.cases[j].condition, pinned)
            elif target.kind == "bracket":
                rng_body = _range_of(target.version)
                assert rng_body is not None and target.bracket is not None
                c = builder.constraint(rng_body.input_variable)
                if not isinstance(c, _DecimalConstraint):
                    raise _Conflict()
                c.scale = max(c.scale, rng_body.boundary_scale)
                if pinned_input is not None:
                    c.pin(pinned_input)
                else:
                    c.narrow(target.bracket.min, target.bracket.max)

            # other requested clauses: aim at a random state so their
            # evaluation stays within defined logic
            for other in manifest.clause_names:
                if other == target.clause:
                    continue
                version = version_chain(contract, other)[0]
                other_logical = _logical_of(version)
                if other_logical is not None:
                    case = rng.randrange(len(other_logical.cases))
                    builder.apply_condition(other_logical.cases[case].condition)
                other_range = _range_of(version)
                if other_range is not None and other_range.input_variable not in builder.constraints:
                    c = builder.constraint(other_range.input_variable)
                    if isinstance(c, _DecimalConstraint):
                        bracket = rng.choice(other_range.brackets)
                        c.scale = max(c.scale, other_range.boundary_scale)
                        c.narrow(bracket.min, bracket.max)

            values = builder.sample(_external_names(decls))
            date = _sample_date(rng, target.version, manifest.date_range)

            # verify: every requested clause reaches a defined state, and the
            # target clause reaches exactly the target state
            ok = True
            for name in set(manifest.clause_names) | {target.clause}:
                version = (
                    target.version
                    if name == target.clause
                    else _active_version(contract, name, date)
                )
                if version is None:
                    ok = False
                    break
                matched = _matched_state(version, values)
                if name == target.clause and target.kind in ("case", "bracket"):
                    if matched.get(target.kind) != target.key:
                        ok = False
                        break
                if _logical_of(version) is not None and "case" not in matched:
                    ok = False
                    break
            if ok:
                return values, date
        except _Conflict:
            continue
    raise UnreachableState(
        f"cannot construct facts reaching state {target.key} of clause "
        f"'{target.clause}'",
        clause=target.clause,
        got=target.key,
    )


def _active_version(contract: ContractDefinition, name: str, date: datetime.date):
    for version in version_chain(contract, name):
        if version.active_on(date):
            return version
    return None


def _render_facts(values: Mapping[str, Value]) -> Dict[str, str]:
    return {name: format_value(values[name]) for name in sorted(values)}


class _SafeDict(dict):
    def __missing__(self, key: str) -> str:
        return "{" + key + "}"


def generate_events(
    contract: ContractDefinition,
    manifest: FixtureManifest,
    seed: int,
    count_per_state: int = 1,
    total: Optional[int] = None,
    boundaries: bool = True,
) -> List[EventRecord]:
    """Deterministic event list covering every reachable decision state.

    Per state: ``count_per_state`` sampled events, plus events pinned at
    both boundary ticks of every bracket when ``boundaries`` is set.
    With ``total``, exactly that many events are produced: one per state
    first (coverage), then random fill; ``total`` must be >= the state
    count.
    """
    rng = random.Random(seed)
    decls = declared_variables(contract)
    targets = [
        t
        for t in state_targets(contract)
        if t.key not in manifest.unreachable_states.get(t.clause, ())
    ]

    plans: List[Tuple[StateTarget, Optional[Decimal]]] = []
    if total is not None:
        if total < len(targets):
            raise UnreachableState(
                f"total {total} is below the state count {len(targets)}",
                got=str(total),
            )
        plans.extend((t, None) for t in targets)
        while len(plans) < total:
            plans.append((rng.choice(targets), None))
    else:
        for target in targets:
            if target.kind == "bracket" and boundaries:
                plans.append((target, target.bracket.min))
                plans.append((target, target.bracket.max))
            for _ in range(count_per_state):
                plans.append((target, None))

    events: List[EventRecord] = []
    for i, (target, pin) in enumerate(plans):
        values, date = _build_event(contract, manifest, decls, target, rng, pinned_input=pin)
        facts = _render_facts(values)
        narrative = manifest.narrative.format_map(_SafeDict(facts)) if manifest.narrative else ""
        events.append(
            EventRecord(
                event_id=f"{contract.contract_id}-{i:04d}",
                contract_id=contract.contract_id,
                facts=facts,
                evaluation_date=date,
                clause_names=manifest.clause_names,
                narrative=narrative,
            )
        )
    return events


def oracle_expected(oracle: GoldOracle, events: Sequence[EventRecord]) -> List[EventRecord]:
    """Fill each event's expected outputs from the gold oracle."""
    out: List[EventRecord] = []
    for event in events:
        if event.contract_id != oracle.contract_id:
            raise OracleGap(
                f"oracle '{oracle.contract_id}' cannot score event for "
                f"contract '{event.contract_id}'"
            )
        expected = oracle.evaluate(event.facts, event.evaluation_date)
        out.append(
            replace(event, expected={k: expected[k] for k in event.clause_names})
        )
    return out
