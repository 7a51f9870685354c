"""Deterministic concordance between engine outputs and oracle expectations."""

from __future__ import annotations

from dataclasses import dataclass, field
from decimal import Decimal
from typing import Dict, List, Mapping, Optional

from ..model import Value, format_value


@dataclass(frozen=True)
class ClauseDiff:
    clause: str
    expected: Optional[str]
    actual: Optional[str]
    delta: Optional[str] = None  # numeric difference when both are decimal


@dataclass(frozen=True)
class Verdict:
    matched: bool
    diffs: List[ClauseDiff] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "matched": self.matched,
            "diffs": [
                {
                    "clause": d.clause,
                    "expected": d.expected,
                    "actual": d.actual,
                    "delta": d.delta,
                }
                for d in self.diffs
            ],
        }


def concordance(
    outputs: Mapping[str, Value],
    expected: Mapping[str, Value],
    numeric_tolerance: Decimal = Decimal(0),
) -> Verdict:
    """Compare engine outputs against expected values per clause.

    Decimals compare exactly at tolerance 0 (the default), otherwise
    within the tolerance; text and booleans always compare exactly.
    An expected clause missing from the outputs is a mismatch.
    """
    diffs: List[ClauseDiff] = []
    for clause in expected:
        want = expected[clause]
        if clause not in outputs:
            diffs.append(ClauseDiff(clause, format_value(want), None))
            continue
        got = outputs[clause]
        if isinstance(want, Decimal) and isinstance(got, Decimal) and not isinstance(want, bool):
            delta = abs(got - want)
            if delta > numeric_tolerance:
                diffs.append(
                    ClauseDiff(clause, format_value(want), format_value(got), format_value(delta))
                )
        elif type(want) is not type(got) or want != got:
            diffs.append(ClauseDiff(clause, format_value(want), format_value(got)))
    return Verdict(matched=not diffs, diffs=diffs)
