#!/usr/bin/env python3
"""Regenerate the bundled fixture contracts and manifests.

The fixture files under ``src/dacl/fixtures/`` are committed artifacts;
this script exists so they can be rebuilt reproducibly after a format
change.  Each contract is validated before being written — the script
refuses to emit a fixture with validation errors.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "src"))

from dacl.loader import parse_contract, validate_contract  # noqa: E402

OUT = ROOT / "src" / "dacl" / "fixtures"


def var(name, source, value_type, description, **extra):
    doc = {"name": name, "source": source, "type": value_type, "description": description}
    doc.update(extra)
    return doc


def cmp(lhs, op, rhs):
    return {"lhs": lhs, "op": op, "rhs": rhs}


# --- energy_sup ---------------------------------------------------------------

ENERGY = {
    "dacl_version": "1",
    "contract_id": "energy_sup",
    "metadata": {
        "title": "Natural gas supply agreement — indexed unit price",
        "currency": "USD",
    },
    "variables": [
        var("regional_gas_index", "external", "decimal",
            "published regional gas index, USD per MMBtu"),
        var("conversion_factor", "external", "decimal",
            "MMBtu per delivered unit conversion factor"),
        var("supplier_margin", "external", "decimal",
            "contracted supplier margin, USD per unit"),
        var("rebate_per_unit", "external", "decimal",
            "negotiated rebate, USD per unit (negative or zero)"),
        var("freight_per_unit", "external", "decimal",
            "freight adder, USD per unit"),
    ],
    "clauses": [
        {
            "name": "price_per_unit",
            "kind": "pricing",
            "source_excerpt": (
                "The unit price shall equal the Regional Gas Index divided by "
                "the Conversion Factor, plus the Supplier Margin, plus any "
                "Rebate, plus the Freight Adder, rounded to the nearest cent."
            ),
            "pricing": {
                "result": "unit_price",
                "precision": 2,
                "rounding": "half_up",
                "steps": [
                    {"target": "base_energy_cost",
                     "expr": "regional_gas_index / conversion_factor"},
                    {"target": "unit_price",
                     "expr": "base_energy_cost + supplier_margin + rebate_per_unit + freight_per_unit"},
                ],
            },
        }
    ],
}

ENERGY_MANIFEST = {
    "contract_id": "energy_sup",
    "contract": "energy_sup.dacl.json",
    "oracle": "energy_sup",
    "clauses": ["price_per_unit"],
    "date_range": ["2024-01-01", "2026-12-31"],
    "domains": {
        "regional_gas_index": {"min": "1.00", "max": "12.00", "scale": 2},
        "conversion_factor": {"min": "0.500", "max": "1.500", "scale": 3},
        "supplier_margin": {"min": "0.10", "max": "2.00", "scale": 2},
        "rebate_per_unit": {"min": "-0.50", "max": "0.00", "scale": 2},
        "freight_per_unit": {"min": "0.00", "max": "1.50", "scale": 2},
    },
    "unreachable_states": {},
    "narrative": "Delivery priced at index {regional_gas_index} with factor {conversion_factor}.",
    "notes": "Single pricing clause; the only decision state is the formula run.",
}


# --- muni_ifb -----------------------------------------------------------------

def _muni_version(start, end, rate):
    clause = {
        "name": "invoice_total",
        "kind": "pricing",
        "validity_start_date": start,
        "source_excerpt": (
            f"Invoices shall total the billed service units at the unit rate of "
            f"${rate} then in effect, plus the fixed administrative fee of $25.00."
        ),
        "pricing": {
            "result": "total",
            "precision": 2,
            "rounding": "half_up",
            "steps": [
                {"target": "total", "expr": f"service_units * {rate} + 25.00"},
            ],
        },
    }
    if end is not None:
        clause["validity_end_date"] = end
    return clause


MUNI = {
    "dacl_version": "1",
    "contract_id": "muni_ifb",
    "metadata": {
        "title": "Municipal services invitation-for-bid — annual fee schedule",
        "currency": "USD",
    },
    "variables": [
        var("service_units", "external", "decimal",
            "billable service units for the invoice period"),
    ],
    "clauses": [
        _muni_version("2023-01-01", "2023-12-31", "12.50"),
        _muni_version("2024-01-01", "2024-12-31", "13.10"),
        _muni_version("2025-01-01", None, "13.75"),
    ],
}

MUNI_MANIFEST = {
    "contract_id": "muni_ifb",
    "contract": "muni_ifb.dacl.json",
    "oracle": "muni_ifb",
    "clauses": ["invoice_total"],
    "date_range": ["2023-01-01", "2026-12-31"],
    "domains": {
        "service_units": {"min": "1", "max": "2000", "scale": 0},
    },
    "unreachable_states": {},
    "narrative": "Invoice for {service_units} service units.",
    "notes": "Three dated versions of one clause; rate changes each January 1.",
}


# --- health_ppo ---------------------------------------------------------------

HEALTH = {
    "dacl_version": "1",
    "contract_id": "health_ppo",
    "metadata": {
        "title": "PPO plan — ambulance transport benefit determination",
    },
    "variables": [
        var("age", "external", "decimal", "member age in whole years"),
        var("relationship", "external", "text",
            "member relationship to the subscriber",
            enum=["child", "self", "spouse"]),
        var("transport_mode", "external", "text",
            "ambulance transport mode", enum=["air", "ground"]),
        var("emergency", "external", "boolean",
            "transport dispatched as an emergency"),
        var("medically_necessary", "external", "boolean",
            "transport certified medically necessary"),
        var("admitted", "external", "boolean",
            "member admitted as inpatient on arrival"),
        var("deductible_met", "external", "boolean",
            "annual deductible already satisfied"),
    ],
    "clauses": [
        {
            "name": "coverage_determination",
            "kind": "logical",
            "source_excerpt": (
                "Emergency ambulance transport is covered when medically "
                "necessary; dependent children under 18 admitted on arrival "
                "are covered in full; air transport waives the deductible; "
                "non-emergency transport is not a covered benefit."
            ),
            "logical": {
                "cases": [
                    {
                        "when": {"all": [
                            cmp("emergency", "=", True),
                            cmp("medically_necessary", "=", True),
                            cmp("admitted", "=", True),
                            cmp("age", "<", {"decimal": "18"}),
                            cmp("relationship", "=", {"text": "child"}),
                        ]},
                        "then": {"text": "covered_in_full_with_admission"},
                    },
                    {
                        "when": {"all": [
                            cmp("emergency", "=", True),
                            cmp("medically_necessary", "=", True),
                            cmp("transport_mode", "=", {"text": "air"}),
                            cmp("deductible_met", "=", False),
                        ]},
                        "then": {"text": "covered_air_deductible_waived"},
                    },
                    {
                        "when": {"all": [
                            cmp("emergency", "=", True),
                            cmp("medically_necessary", "=", True),
                        ]},
                        "then": {"text": "covered_standard_cost_sharing"},
                    },
                    {
                        "when": {"all": [
                            cmp("emergency", "=", True),
                            cmp("medically_necessary", "=", False),
                        ]},
                        "then": {"text": "denied_not_medically_necessary"},
                    },
                    {
                        "when": cmp("emergency", "=", False),
                        "then": {"text": "denied_routine_transport"},
                    },
                ],
            },
        }
    ],
}

HEALTH_MANIFEST = {
    "contract_id": "health_ppo",
    "contract": "health_ppo.dacl.json",
    "oracle": "health_ppo",
    "clauses": ["coverage_determination"],
    "date_range": ["2024-01-01", "2026-12-31"],
    "domains": {
        "age": {"min": "0", "max": "90", "scale": 0},
    },
    "unreachable_states": {},
    "narrative": "Claim for {transport_mode} transport of a member aged {age}.",
    "notes": "Five ordered cases; first match wins, no default.",
}


# --- logistics_msa ------------------------------------------------------------

def _fsc_brackets():
    brackets = []

    def add(lo: str, hi: str, pct: int):
        brackets.append({"min": lo, "max": hi, "output": {"decimal": str(pct)},
                         "label": f"p{pct:02d}"})

    for k in range(24):  # 2.00-2.099 -> 1% ... 4.30-4.399 -> 24%
        lo = 200 + 10 * k
        add(f"{lo / 100:.2f}", f"{lo / 100 + 0.099:.3f}", 1 + k)
    add("4.40", "4.449", 25)
    add("4.45", "4.499", 26)
    for j in range(22):  # 4.50-4.599 -> 27% ... 6.60-6.699 -> 48%
        lo = 450 + 10 * j
        add(f"{lo / 100:.2f}", f"{lo / 100 + 0.099:.3f}", 27 + j)
    return brackets


_EQUIPMENT = ("van", "reefer", "flatbed", "stepdeck")
_LINEHAUL_RATE = {
    ("a", "van"): "2.15", ("a", "reefer"): "2.65",
    ("a", "flatbed"): "2.40", ("a", "stepdeck"): "2.90",
    ("b", "van"): "2.55", ("b", "reefer"): "3.05",
    ("b", "flatbed"): "2.80", ("b", "stepdeck"): "3.30",
}
_OVERSIZED_RATE = {"van": "3.75", "reefer": "4.25", "flatbed": "4.00", "stepdeck": "4.50"}
_ZONE_FLAT = {
    (1, "van"): "125", (1, "reefer"): "175", (1, "flatbed"): "150", (1, "stepdeck"): "200",
    (2, "van"): "260", (2, "reefer"): "320", (2, "flatbed"): "290", (2, "stepdeck"): "350",
}


def _rate_cases():
    cases = []
    mileage = "miles * {rate} * (1 + fsc_table / 100)"
    stops = " + 100 * extra_stops"

    def tier_cond(tier):
        if tier == "a":
            return [cmp("weight", "<=", {"decimal": "0.5"})]
        return [cmp("weight", ">", {"decimal": "0.5"}),
                cmp("weight", "<=", {"decimal": "0.75"})]

    for tier in ("a", "b"):
        for eq in _EQUIPMENT:
            cases.append({
                "when": {"all": [cmp("service_type", "=", {"text": "linehaul"}),
                                 *tier_cond(tier),
                                 cmp("equipment_type", "=", {"text": eq})]},
                "then": {"expr": mileage.format(rate=_LINEHAUL_RATE[(tier, eq)]) + stops},
            })
    for tier in ("a", "b"):
        for eq in _EQUIPMENT:
            cases.append({
                "when": {"all": [cmp("service_type", "=", {"text": "backhaul"}),
                                 *tier_cond(tier),
                                 cmp("equipment_type", "=", {"text": eq})]},
                "then": {"expr": mileage.format(rate=_LINEHAUL_RATE[(tier, eq)])
                         + " * 0.5" + stops},
            })
    for zone, bounds in ((1, [cmp("miles", "<=", {"decimal": "45"})]),
                         (2, [cmp("miles", ">", {"decimal": "45"}),
                              cmp("miles", "<=", {"decimal": "140"})])):
        for eq in _EQUIPMENT:
            cases.append({
                "when": {"all": [cmp("service_type", "=", {"text": "local"}),
                                 *bounds,
                                 cmp("equipment_type", "=", {"text": eq})]},
                "then": {"expr": _ZONE_FLAT[(zone, eq)] + stops},
            })
    for eq in _EQUIPMENT:
        cases.append({
            "when": {"all": [cmp("service_type", "=", {"text": "oversized"}),
                             cmp("equipment_type", "=", {"text": eq})]},
            "then": {"expr": mileage.format(rate=_OVERSIZED_RATE[eq]) + stops},
        })
    assert len(cases) == 28
    return cases


LOGISTICS = {
    "dacl_version": "1",
    "contract_id": "logistics_msa",
    "metadata": {
        "title": "Freight master services agreement — rating and fuel surcharge",
        "currency": "USD",
    },
    "variables": [
        var("diesel_price", "external", "decimal",
            "national average diesel price, USD per gallon"),
        var("service_type", "external", "text",
            "requested service", enum=["backhaul", "linehaul", "local", "oversized"]),
        var("equipment_type", "external", "text",
            "equipment required for the load",
            enum=["flatbed", "reefer", "stepdeck", "van"]),
        var("weight", "external", "decimal",
            "load weight in fractions of full truckload capacity"),
        var("miles", "external", "decimal", "shipment distance in miles"),
        var("extra_stops", "external", "decimal",
            "stop-offs beyond origin and destination"),
    ],
    "clauses": [
        {
            "name": "fsc_table",
            "kind": "range",
            "source_excerpt": (
                "The fuel surcharge percentage is read from the published "
                "table against the weekly national average diesel price, "
                "increasing one percentage point per $0.10 above the top row."
            ),
            "range": {
                "input": "diesel_price",
                "boundary_scale": 3,
                "brackets": _fsc_brackets(),
                "default": {"decimal": "0"},
                "above_top": {"step": "0.10", "increment": "1"},
            },
        },
        {
            "name": "linehaul_rate",
            "kind": "logical",
            "source_excerpt": (
                "Loads are rated per mile by weight tier and equipment, plus "
                "fuel surcharge and $100 per extra stop; backhaul moves at "
                "half the mileage rate; local moves are zone flat rates; "
                "oversized loads use the permitted-load mileage rates."
            ),
            "logical": {
                "precision": 2,
                "rounding": "half_up",
                "cases": _rate_cases(),
            },
        },
    ],
}

LOGISTICS_MANIFEST = {
    "contract_id": "logistics_msa",
    "contract": "logistics_msa.dacl.json",
    "oracle": "logistics_msa",
    "clauses": ["fsc_table", "linehaul_rate"],
    "date_range": ["2024-01-01", "2026-12-31"],
    "domains": {
        "diesel_price": {"min": "2.000", "max": "7.400", "scale": 3},
        "weight": {"min": "0.05", "max": "0.75", "scale": 2},
        "miles": {"min": "1", "max": "500", "scale": 0},
        "extra_stops": {"min": "0", "max": "3", "scale": 0},
    },
    "unreachable_states": {},
    "narrative": "{service_type} load, {miles} miles, diesel at {diesel_price}.",
    "notes": "28 rating cases plus a 48-bracket fuel surcharge table (76 states).",
}


FIXTURES = [
    ("energy_sup", ENERGY, ENERGY_MANIFEST),
    ("muni_ifb", MUNI, MUNI_MANIFEST),
    ("health_ppo", HEALTH, HEALTH_MANIFEST),
    ("logistics_msa", LOGISTICS, LOGISTICS_MANIFEST),
]


def main() -> int:
    OUT.mkdir(parents=True, exist_ok=True)
    failed = False
    for fid, contract_doc, manifest_doc in FIXTURES:
        text = json.dumps(contract_doc, indent=2, ensure_ascii=False) + "\n"
        contract = parse_contract(text)
        report = validate_contract(contract)
        if not report.ok:
            failed = True
            print(f"{fid}: REFUSING to write, validation errors:")
            for finding in report.errors:
                print(f"  [{finding.code}] {finding.path}: {finding.message}")
            continue
        (OUT / f"{fid}.dacl.json").write_text(text, encoding="utf-8")
        (OUT / f"{fid}.manifest.json").write_text(
            json.dumps(manifest_doc, indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
        )
        warn = f", {len(report.warnings)} warning(s)" if report.warnings else ""
        print(f"{fid}: written ({len(contract.clauses)} clause version(s){warn})")
    return 1 if failed else 0


if __name__ == "__main__":
    raise SystemExit(main())
