"""Command-line interface.

Subcommands::

    dacl validate   contract.dacl.json ...
    dacl evaluate   contract.dacl.json -c clause -f facts.json -d 2025-03-01
    dacl batch      contract.dacl.json events.jsonl -o results.jsonl
    dacl gen-events manifest.json --seed 7 -o events.jsonl
    dacl coverage   contract.dacl.json traces.jsonl
    dacl render     trace.json [--contract contract.dacl.json]

Exit codes: 0 success, 1 domain failure (validation errors, evaluation
errors, concordance mismatches, incomplete coverage), 2 usage or input
errors.

The ``DACL_ROUNDING`` environment variable, when set, supplies the
rounding mode assumed for clauses that omit one (default half_up).
"""

from __future__ import annotations

import argparse
import datetime
import json
import os
import sys
from decimal import Decimal, InvalidOperation
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from . import audit, engine, loader
from .errors import DaclError
from .expr import ROUNDING_MODES
from .model import ContractDefinition
from .testkit import events as events_mod
from .testkit.concordance import concordance
from .testkit.oracles import ORACLES, OracleGap

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


class _CliError(Exception):
    """Usage/input problem: message to stderr, exit code 2."""


def _default_rounding() -> Optional[str]:
    mode = os.environ.get("DACL_ROUNDING")
    if mode is not None and mode not in ROUNDING_MODES:
        raise _CliError(
            f"DACL_ROUNDING={mode!r} is not a rounding mode "
            f"(expected one of: {', '.join(sorted(ROUNDING_MODES))})"
        )
    return mode


def _load_contract(path: str) -> ContractDefinition:
    try:
        return loader.load_contract_file(path, default_rounding=_default_rounding())
    except OSError as exc:
        raise _CliError(f"cannot read contract {path}: {exc}") from None
    except DaclError as exc:
        raise _CliError(f"cannot parse contract {path}: {exc.message}") from None


def _load_json(path: str):
    try:
        with open(path, "r", encoding="utf-8") as handle:
            return json.load(handle, parse_float=Decimal)
    except OSError as exc:
        raise _CliError(f"cannot read {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise _CliError(f"{path} is not valid JSON: {exc}") from None


def _parse_date(raw: str) -> datetime.date:
    try:
        return datetime.date.fromisoformat(raw)
    except ValueError:
        raise _CliError(f"invalid date {raw!r} (expected YYYY-MM-DD)") from None


def _print_findings(path: str, report: loader.ValidationReport) -> None:
    status = "ok" if report.ok else "INVALID"
    print(f"{path}: {status} ({len(report.errors)} error(s), {len(report.warnings)} warning(s))")
    for finding in report.errors:
        print(f"  error [{finding.code}] {finding.path}: {finding.message}")
    for finding in report.warnings:
        print(f"  warning [{finding.code}] {finding.path}: {finding.message}")


# --- subcommands --------------------------------------------------------------


def _cmd_validate(args: argparse.Namespace) -> int:
    worst = EXIT_OK
    for path in args.contracts:
        try:
            contract = _load_contract(path)
        except _CliError as exc:
            print(f"{path}: UNPARSEABLE: {exc}", file=sys.stderr)
            worst = max(worst, EXIT_USAGE)
            continue
        report = loader.validate_contract(contract)
        if args.json:
            print(json.dumps({"contract": path, **report.to_dict()}, sort_keys=True))
        else:
            _print_findings(path, report)
        if not report.ok:
            worst = max(worst, EXIT_FAILURE)
    return worst


def _facts_from_arg(raw: str) -> Dict[str, object]:
    if raw.startswith("@"):
        doc = _load_json(raw[1:])
    else:
        try:
            doc = json.loads(raw, parse_float=Decimal)
        except json.JSONDecodeError as exc:
            raise _CliError(f"--facts is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise _CliError("--facts must be a JSON object")
    return doc


def _cmd_evaluate(args: argparse.Namespace) -> int:
    contract = _load_contract(args.contract)
    report = loader.validate_contract(contract)
    if not report.ok:
        _print_findings(args.contract, report)
        return EXIT_FAILURE
    request = engine.EvaluationRequest(
        clause_names=tuple(args.clause),
        facts=_facts_from_arg(args.facts),
        evaluation_date=_parse_date(args.date),
    )
    try:
        result = engine.evaluate_clauses(contract, request)
    except DaclError as exc:
        print(json.dumps({"error": exc.to_dict()}, sort_keys=True), file=sys.stderr)
        if args.trace and exc.trail is not None:
            Path(args.trace).write_bytes(audit.canonical_serialize(exc.trail))
        return EXIT_FAILURE
    print(json.dumps({"outputs": result.outputs_to_json()}, sort_keys=True))
    if args.trace:
        Path(args.trace).write_bytes(audit.canonical_serialize(result.trail))
    if args.render:
        print(audit.render_trace(result.trail, contract), end="")
    return EXIT_OK


def _evaluate_event(
    contract: ContractDefinition,
    event: events_mod.EventRecord,
    tolerance: Decimal,
) -> Tuple[dict, Optional[audit.AuditTrail], bool]:
    """One batch row: (result document, trail, ok)."""
    request = engine.EvaluationRequest(
        clause_names=event.clause_names,
        facts=dict(event.facts),
        evaluation_date=event.evaluation_date,
    )
    try:
        result = engine.evaluate_clauses(contract, request)
    except DaclError as exc:
        return {"event_id": event.event_id, "error": exc.to_dict()}, exc.trail, False
    doc: dict = {
        "event_id": event.event_id,
        "outputs": result.outputs_to_json(),
    }
    ok = True
    if event.expected is not None:
        verdict = concordance(result.outputs, event.expected, tolerance)
        doc["concordance"] = verdict.to_dict()
        ok = verdict.matched
    return doc, result.trail, ok


def _read_events(path: str) -> List[events_mod.EventRecord]:
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise _CliError(f"cannot read events {path}: {exc}") from None
    events = []
    for i, line in enumerate(lines):
        if not line.strip():
            continue
        try:
            events.append(events_mod.EventRecord.from_json_line(line))
        except (json.JSONDecodeError, KeyError, ValueError) as exc:
            raise _CliError(f"{path}:{i + 1}: bad event record: {exc}") from None
    return events


def _cmd_batch(args: argparse.Namespace) -> int:
    contract = _load_contract(args.contract)
    report = loader.validate_contract(contract)
    if not report.ok:
        _print_findings(args.contract, report)
        return EXIT_FAILURE
    try:
        tolerance = Decimal(args.tolerance)
    except InvalidOperation:
        raise _CliError(f"invalid --tolerance {args.tolerance!r}") from None
    events = _read_events(args.events)

    rows: List[dict] = []
    trails: List[audit.AuditTrail] = []
    matched = mismatched = errored = 0
    if args.jobs > 1:
        import multiprocessing

        with multiprocessing.Pool(
            args.jobs, initializer=_worker_init, initargs=(args.contract, str(tolerance))
        ) as pool:
            outcomes = pool.map(_worker_evaluate, [e.to_json_line() for e in events])
    else:
        outcomes = [
            _serialize_outcome(_evaluate_event(contract, event, tolerance))
            for event in events
        ]
    for doc, trail_doc, ok in outcomes:
        rows.append(doc)
        if trail_doc is not None:
            trails.append(audit.trail_from_dict(trail_doc))
        if "error" in doc:
            errored += 1
        elif ok:
            matched += 1
        else:
            mismatched += 1

    out = Path(args.out) if args.out else None
    payload = "\n".join(json.dumps(r, sort_keys=True) for r in rows) + "\n"
    if out:
        out.write_text(payload, encoding="utf-8")
    else:
        sys.stdout.write(payload)
    if args.traces:
        with open(args.traces, "wb") as handle:
            for trail in trails:
                handle.write(audit.canonical_serialize(trail) + b"\n")

    summary = {
        "events": len(events),
        "matched": matched,
        "mismatched": mismatched,
        "errors": errored,
    }
    print(json.dumps({"summary": summary}, sort_keys=True), file=sys.stderr)

    if args.figures:
        from . import figures

        figdir = Path(args.figures)
        figdir.mkdir(parents=True, exist_ok=True)
        cov = audit.trace_coverage(trails, contract)
        figures.coverage_figure(cov, figdir / "coverage.png")
        figures.concordance_figure(
            {contract.contract_id: (matched, mismatched + errored)},
            figdir / "concordance.png",
        )
    return EXIT_OK if mismatched == 0 and errored == 0 else EXIT_FAILURE


_WORKER_STATE: dict = {}


def _worker_init(contract_path: str, tolerance: str) -> None:
    _WORKER_STATE["contract"] = loader.load_contract_file(
        contract_path, default_rounding=_default_rounding()
    )
    _WORKER_STATE["tolerance"] = Decimal(tolerance)


def _worker_evaluate(event_line: str):
    event = events_mod.EventRecord.from_json_line(event_line)
    return _serialize_outcome(
        _evaluate_event(_WORKER_STATE["contract"], event, _WORKER_STATE["tolerance"])
    )


def _serialize_outcome(outcome):
    doc, trail, ok = outcome
    return doc, None if trail is None else trail.to_dict(), ok


def _resolve_manifest(spec: str) -> Tuple[events_mod.FixtureManifest, ContractDefinition]:
    from . import fixtures

    if os.path.sep not in spec and not spec.endswith(".json"):
        try:
            return fixtures.load_manifest(spec), fixtures.load_fixture(spec)
        except FileNotFoundError:
            raise _CliError(
                f"unknown fixture id '{spec}' (bundled: {', '.join(fixtures.FIXTURE_IDS)})"
            ) from None
    path = Path(spec)
    try:
        manifest = events_mod.FixtureManifest.from_json(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise _CliError(f"cannot read manifest {spec}: {exc}") from None
    except (json.JSONDecodeError, KeyError, ValueError) as exc:
        raise _CliError(f"bad manifest {spec}: {exc}") from None
    contract = _load_contract(str(path.parent / manifest.contract_file))
    return manifest, contract


def _cmd_gen_events(args: argparse.Namespace) -> int:
    manifest, contract = _resolve_manifest(args.manifest)
    try:
        events = events_mod.generate_events(
            contract,
            manifest,
            seed=args.seed,
            count_per_state=args.count_per_state,
            total=args.total,
            boundaries=not args.no_boundaries,
        )
        if args.expected:
            oracle = ORACLES.get(manifest.oracle)
            if oracle is None:
                raise _CliError(f"no bundled oracle '{manifest.oracle}'")
            events = events_mod.oracle_expected(oracle, events)
    except (DaclError, OracleGap) as exc:
        print(f"event generation failed: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    payload = "\n".join(e.to_json_line() for e in events) + "\n"
    if args.out:
        Path(args.out).write_text(payload, encoding="utf-8")
        print(f"wrote {len(events)} events to {args.out}", file=sys.stderr)
    else:
        sys.stdout.write(payload)
    return EXIT_OK


def _read_traces(path: str) -> List[audit.AuditTrail]:
    trails = []
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise _CliError(f"cannot read traces {path}: {exc}") from None
    for i, line in enumerate(lines):
        if not line.strip():
            continue
        try:
            trails.append(audit.trail_from_dict(json.loads(line)))
        except (json.JSONDecodeError, KeyError) as exc:
            raise _CliError(f"{path}:{i + 1}: bad trace record: {exc}") from None
    return trails


def _cmd_coverage(args: argparse.Namespace) -> int:
    contract = _load_contract(args.contract)
    trails = _read_traces(args.traces)
    unreachable = None
    if args.manifest:
        manifest, _ = _resolve_manifest(args.manifest)
        unreachable = manifest.unreachable_states
    try:
        report = audit.trace_coverage(trails, contract, unreachable)
    except DaclError as exc:
        print(f"coverage failed: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    if args.json:
        print(json.dumps(report.to_dict(), sort_keys=True))
    else:
        print(f"coverage {report.hit_total}/{report.state_total} ({report.fraction:.1%})")
        for name, cov in sorted(report.per_clause.items()):
            missing = sorted(set(cov.declared) - set(cov.hit))
            line = f"  {name}: {len(cov.hit)}/{len(cov.declared)}"
            if missing:
                line += "  missing: " + ", ".join(missing[:8])
                if len(missing) > 8:
                    line += f" (+{len(missing) - 8} more)"
            print(line)
    if args.figures:
        from . import figures

        figdir = Path(args.figures)
        figdir.mkdir(parents=True, exist_ok=True)
        figures.coverage_figure(report, figdir / "coverage.png")
    return EXIT_OK if report.hit_total == report.state_total else EXIT_FAILURE


def _cmd_render(args: argparse.Namespace) -> int:
    trail = audit.trail_from_dict(_load_json(args.trace))
    contract = _load_contract(args.contract) if args.contract else None
    sys.stdout.write(audit.render_trace(trail, contract))
    return EXIT_OK


# --- argument parsing ---------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dacl", description="Deterministic contract clause evaluation."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="run all load-time checks on contract files")
    p.add_argument("contracts", nargs="+", metavar="CONTRACT")
    p.add_argument("--json", action="store_true", help="machine-readable findings")
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("evaluate", help="evaluate clauses against one set of facts")
    p.add_argument("contract", metavar="CONTRACT")
    p.add_argument("-c", "--clause", action="append", required=True, help="clause to evaluate (repeatable)")
    p.add_argument("-f", "--facts", required=True, help="facts as inline JSON or @file.json")
    p.add_argument("-d", "--date", required=True, help="evaluation date, YYYY-MM-DD")
    p.add_argument("--trace", help="write the canonical audit trail to this file")
    p.add_argument("--render", action="store_true", help="print a human-readable trace")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("batch", help="evaluate a JSONL event stream")
    p.add_argument("contract", metavar="CONTRACT")
    p.add_argument("events", metavar="EVENTS_JSONL")
    p.add_argument("-o", "--out", help="results JSONL (default: stdout)")
    p.add_argument("--traces", help="also write one canonical trail per event (JSONL)")
    p.add_argument("--tolerance", default="0", help="numeric concordance tolerance (default 0)")
    p.add_argument("--jobs", type=int, default=1, help="worker processes (default 1)")
    p.add_argument("--figures", metavar="DIR", help="render coverage/concordance PNGs into DIR")
    p.set_defaults(func=_cmd_batch)

    p = sub.add_parser("gen-events", help="generate a seeded state-sweeping event stream")
    p.add_argument("manifest", metavar="MANIFEST", help="manifest path or bundled fixture id")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--count-per-state", type=int, default=1)
    p.add_argument("--total", type=int, help="exact event count (coverage first, then random)")
    p.add_argument("--no-boundaries", action="store_true", help="skip bracket boundary events")
    p.add_argument("--expected", action="store_true", help="attach oracle expectations")
    p.add_argument("-o", "--out", help="events JSONL (default: stdout)")
    p.set_defaults(func=_cmd_gen_events)

    p = sub.add_parser("coverage", help="decision-state coverage of saved traces")
    p.add_argument("contract", metavar="CONTRACT")
    p.add_argument("traces", metavar="TRACES_JSONL")
    p.add_argument("--manifest", help="manifest declaring unreachable states")
    p.add_argument("--json", action="store_true")
    p.add_argument("--figures", metavar="DIR", help="render a coverage PNG into DIR")
    p.set_defaults(func=_cmd_coverage)

    p = sub.add_parser("render", help="pretty-print a saved audit trail")
    p.add_argument("trace", metavar="TRACE_JSON")
    p.add_argument("--contract", help="contract file for source excerpts")
    p.set_defaults(func=_cmd_render)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _CliError as exc:
        print(f"dacl: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DaclError as exc:
        print(f"dacl: [{exc.code}] {exc.message}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    raise SystemExit(main())
