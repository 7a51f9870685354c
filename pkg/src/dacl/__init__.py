"""Deterministic clause evaluation for commercial contracts.

Contracts are JSON files holding a typed variable schema and versioned
clauses (procedures, logical cases, range brackets, pricing formulas).
Evaluation is exact-decimal, sandboxed and reproducible: the same
contract, facts and date always produce byte-identical outputs and audit
trails.

Typical use::

    from dacl import load_contract_file, validate_contract
    from dacl import EvaluationRequest, evaluate_clauses

    contract = load_contract_file("tariff.dacl.json")
    assert validate_contract(contract).ok
    result = evaluate_clauses(contract, EvaluationRequest(
        clause_names=("linehaul_rate",),
        facts={"miles": "420", "service_type": "linehaul", ...},
        evaluation_date=date(2025, 3, 1),
    ))
"""

from .audit import (
    AuditTrail,
    CoverageReport,
    canonical_serialize,
    declared_states,
    render_trace,
    trace_coverage,
    trail_from_dict,
)
from .engine import (
    EvaluationRequest,
    EvaluationResult,
    coerce_facts,
    coerce_value,
    evaluate_clauses,
    select_active_version,
)
from .errors import DaclError
from .loader import (
    Finding,
    ValidationReport,
    dependency_graph,
    load_contract_file,
    parse_contract,
    serialize_contract,
    validate_contract,
)
from .model import ContractDefinition, Value

__version__ = "1.0.0"

__all__ = [
    "AuditTrail",
    "CoverageReport",
    "canonical_serialize",
    "declared_states",
    "render_trace",
    "trace_coverage",
    "trail_from_dict",
    "EvaluationRequest",
    "EvaluationResult",
    "coerce_facts",
    "coerce_value",
    "evaluate_clauses",
    "select_active_version",
    "DaclError",
    "Finding",
    "ValidationReport",
    "dependency_graph",
    "load_contract_file",
    "parse_contract",
    "serialize_contract",
    "validate_contract",
    "ContractDefinition",
    "Value",
    "__version__",
]
