"""Structured error types shared across the loader, evaluator and CLI.

Every error carries a stable machine-readable ``code`` plus optional
clause/path context, and serializes to a flat JSON object so upstream
systems can react programmatically instead of scraping messages.
"""

from __future__ import annotations

from typing import Any, Optional


class DaclError(Exception):
    """Base class for all engine errors.

    Attributes mirror the serialized form: {code, message, clause, path,
    expected, got}.
    """

    code = "DACL_ERROR"

    def __init__(
        self,
        message: str,
        *,
        clause: Optional[str] = None,
        path: Optional[str] = None,
        expected: Any = None,
        got: Any = None,
    ) -> None:
        super().__init__(message)
        self.message = message
        self.clause = clause
        self.path = path
        self.expected = expected
        self.got = got
        # Partial audit trail attached by the engine when evaluation aborts.
        self.trail = None

    def to_dict(self) -> dict:
        return {
            "code": self.code,
            "message": self.message,
            "clause": self.clause,
            "path": self.path,
            "expected": None if self.expected is None else str(self.expected),
            "got": None if self.got is None else str(self.got),
        }


class ParseError(DaclError):
    """Malformed contract file or expression text."""

    code = "PARSE_ERROR"

    def __init__(self, message: str, *, line: Optional[int] = None,
                 column: Optional[int] = None, **kw: Any) -> None:
        super().__init__(message, **kw)
        self.line = line
        self.column = column


class SandboxViolation(DaclError):
    """Expression referenced a function outside the whitelist."""

    code = "SANDBOX_VIOLATION"


class CalculationError(DaclError):
    """Arithmetic fault during expression evaluation (division by zero,
    out-of-domain sqrt/log, fractional exponent)."""

    code = "ARITHMETIC_ERROR"


class MissingVariable(DaclError):
    code = "MISSING_VARIABLE"


class UnknownVariable(DaclError):
    """A fact key was supplied that the contract does not declare."""

    code = "UNKNOWN_VARIABLE"


class TypeMismatch(DaclError):
    code = "TYPE_MISMATCH"


class EnumViolation(DaclError):
    code = "ENUM_VIOLATION"


class DuplicateVariable(DaclError):
    code = "DUPLICATE_VARIABLE"


class UnknownClause(DaclError):
    code = "UNKNOWN_CLAUSE"


class CyclicDependency(DaclError):
    code = "DEPENDENCY_CYCLE"

    def __init__(self, cycle: list, **kw: Any) -> None:
        super().__init__("cyclic dependency: " + " -> ".join(cycle), **kw)
        self.cycle = list(cycle)


class NoActiveVersion(DaclError):
    code = "NO_ACTIVE_VERSION"


class NoMatchingCase(DaclError):
    code = "NO_MATCHING_CASE"


class NoMatchingBracket(DaclError):
    code = "NO_MATCHING_BRACKET"


class ForeignTrace(DaclError):
    """A trace references a clause the contract does not define."""

    code = "FOREIGN_TRACE"


class UnreachableState(DaclError):
    """Event generation could not construct facts reaching a decision state."""

    code = "UNREACHABLE_STATE"


class MissingOutput(DaclError):
    """Concordance: expected output names a clause absent from the result."""

    code = "MISSING_OUTPUT"
