"""Hand-coded gold-standard oracles for the four fixture contracts.

Each oracle re-implements its contract's logic directly in Python,
independently of the clause evaluator: this module imports nothing from
the loader, expression or engine modules (a test enforces that), so an
agreement between oracle and engine is evidence, not tautology.

Oracles take raw facts (strings/numbers) plus an evaluation date and
return a map of clause name to expected value.
"""

from __future__ import annotations

import datetime
from dataclasses import dataclass
from decimal import Decimal, ROUND_CEILING, ROUND_FLOOR, ROUND_HALF_UP, localcontext
from typing import Callable, Dict, Mapping, Union

Expected = Dict[str, Union[Decimal, str, bool]]


class OracleGap(Exception):
    """The oracle does not define an outcome for this input combination —
    a fixture-design bug that must surface, not be swallowed."""


@dataclass(frozen=True)
class GoldOracle:
    contract_id: str
    evaluate: Callable[[Mapping[str, object], datetime.date], Expected]


def _dec(facts: Mapping[str, object], name: str) -> Decimal:
    try:
        return Decimal(str(facts[name]))
    except Exception as exc:  # noqa: BLE001 - oracle gaps must be loud
        raise OracleGap(f"fact '{name}' missing or non-numeric: {exc}") from None


def _text(facts: Mapping[str, object], name: str) -> str:
    value = facts.get(name)
    if not isinstance(value, str):
        raise OracleGap(f"fact '{name}' missing or not text")
    return value


def _flag(facts: Mapping[str, object], name: str) -> bool:
    value = facts.get(name)
    if isinstance(value, bool):
        return value
    if value in ("true", "false"):
        return value == "true"
    raise OracleGap(f"fact '{name}' missing or not boolean")


def _money(value: Decimal) -> Decimal:
    return value.quantize(Decimal("0.01"), rounding=ROUND_HALF_UP)


# --- Energy-Sup --------------------------------------------------------------


def _energy(facts: Mapping[str, object], date: datetime.date) -> Expected:
    idx = _dec(facts, "regional_gas_index")
    cf = _dec(facts, "conversion_factor")
    if cf == 0:
        raise OracleGap("conversion_factor must be nonzero")
    with localcontext() as ctx:
        ctx.prec = 40
        price = idx / cf + _dec(facts, "supplier_margin") + _dec(facts, "rebate_per_unit") + _dec(facts, "freight_per_unit")
    return {"price_per_unit": _money(price)}


energy_sup_oracle = GoldOracle("energy_sup", _energy)


# --- Muni-IFB ----------------------------------------------------------------

_MUNI_ADMIN_FEE = Decimal("25.00")
_MUNI_RATES = (
    (datetime.date(2023, 1, 1), datetime.date(2023, 12, 31), Decimal("12.50")),
    (datetime.date(2024, 1, 1), datetime.date(2024, 12, 31), Decimal("13.10")),
    (datetime.date(2025, 1, 1), None, Decimal("13.75")),
)


def _muni(facts: Mapping[str, object], date: datetime.date) -> Expected:
    units = _dec(facts, "service_units")
    for start, end, rate in _MUNI_RATES:
        if date >= start and (end is None or date <= end):
            return {"invoice_total": _money(units * rate + _MUNI_ADMIN_FEE)}
    raise OracleGap(f"no fee schedule in force on {date.isoformat()}")


muni_ifb_oracle = GoldOracle("muni_ifb", _muni)


# --- Health-PPO --------------------------------------------------------------


def _health(facts: Mapping[str, object], date: datetime.date) -> Expected:
    age = _dec(facts, "age")
    relationship = _text(facts, "relationship")
    transport = _text(facts, "transport_mode")
    emergency = _flag(facts, "emergency")
    necessary = _flag(facts, "medically_necessary")
    admitted = _flag(facts, "admitted")
    deductible_met = _flag(facts, "deductible_met")

    if emergency and necessary and admitted and age < 18 and relationship == "child":
        outcome = "covered_in_full_with_admission"
    elif emergency and necessary and transport == "air" and not deductible_met:
        outcome = "covered_air_deductible_waived"
    elif emergency and necessary:
        outcome = "covered_standard_cost_sharing"
    elif emergency and not necessary:
        outcome = "denied_not_medically_necessary"
    elif not emergency:
        outcome = "denied_routine_transport"
    else:  # pragma: no cover - the chain above is exhaustive
        raise OracleGap("no coverage determination for these facts")
    return {"coverage_determination": outcome}


health_ppo_oracle = GoldOracle("health_ppo", _health)


# --- Logistics-MSA -----------------------------------------------------------

# Diesel surcharge percentages, anchored at 2.00->1%, 4.10->22%, 4.50->27%,
# 6.60->48%; the extra point sits in the split 4.40-4.449 / 4.45-4.499 pair.


def _fsc_percent(price: Decimal) -> Decimal:
    tenth = Decimal("0.10")
    with localcontext() as ctx:
        ctx.prec = 40
        if price < Decimal("2.00"):
            return Decimal(0)  # below the first table row no surcharge applies
        if price <= Decimal("4.449"):
            steps = ((price - Decimal("2.00")) / tenth).to_integral_value(rounding=ROUND_FLOOR)
            return Decimal(1) + steps
        if price <= Decimal("4.499"):
            return Decimal(26)
        if price <= Decimal("6.699"):
            steps = ((price - Decimal("4.50")) / tenth).to_integral_value(rounding=ROUND_FLOOR)
            return Decimal(27) + steps
        extra = ((price - Decimal("6.699")) / tenth).to_integral_value(rounding=ROUND_CEILING)
        return Decimal(48) + extra


_PER_MILE = {
    # (tier, equipment) -> $/mile
    ("a", "van"): Decimal("2.15"),
    ("a", "reefer"): Decimal("2.65"),
    ("a", "flatbed"): Decimal("2.40"),
    ("a", "stepdeck"): Decimal("2.90"),
    ("b", "van"): Decimal("2.55"),
    ("b", "reefer"): Decimal("3.05"),
    ("b", "flatbed"): Decimal("2.80"),
    ("b", "stepdeck"): Decimal("3.30"),
}

_OVERSIZED = {
    "van": Decimal("3.75"),
    "reefer": Decimal("4.25"),
    "flatbed": Decimal("4.00"),
    "stepdeck": Decimal("4.50"),
}

_ZONE_FLAT = {
    # (zone, equipment) -> flat fee
    (1, "van"): Decimal("125"),
    (1, "reefer"): Decimal("175"),
    (1, "flatbed"): Decimal("150"),
    (1, "stepdeck"): Decimal("200"),
    (2, "van"): Decimal("260"),
    (2, "reefer"): Decimal("320"),
    (2, "flatbed"): Decimal("290"),
    (2, "stepdeck"): Decimal("350"),
}

_STOP_FEE = Decimal("100")


def _weight_tier(weight: Decimal) -> str:
    if weight <= Decimal("0.5"):
        return "a"
    if weight <= Decimal("0.75"):
        return "b"
    raise OracleGap(f"shipment weight {weight} above Tier B limit")


def _logistics(facts: Mapping[str, object], date: datetime.date) -> Expected:
    fsc = _fsc_percent(_dec(facts, "diesel_price"))
    service = _text(facts, "service_type")
    equipment = _text(facts, "equipment_type")
    miles = _dec(facts, "miles")
    stops = _dec(facts, "extra_stops")
    with localcontext() as ctx:
        ctx.prec = 40
        fuel_factor = 1 + fsc / 100
        if service == "linehaul":
            tier = _weight_tier(_dec(facts, "weight"))
            rate = _money(miles * _PER_MILE[(tier, equipment)] * fuel_factor + _STOP_FEE * stops)
        elif service == "backhaul":
            tier = _weight_tier(_dec(facts, "weight"))
            rate = _money(
                miles * _PER_MILE[(tier, equipment)] * fuel_factor * Decimal("0.5")
                + _STOP_FEE * stops
            )
        elif service == "local":
            if miles <= 45:
                zone = 1
            elif miles <= 140:
                zone = 2
            else:
                raise OracleGap(f"local service beyond 140 miles ({miles})")
            rate = _money(_ZONE_FLAT[(zone, equipment)] + _STOP_FEE * stops)
        elif service == "oversized":
            rate = _money(miles * _OVERSIZED[equipment] * fuel_factor + _STOP_FEE * stops)
        else:
            raise OracleGap(f"unknown service type '{service}'")
    return {"fsc_table": fsc, "linehaul_rate": rate}


logistics_msa_oracle = GoldOracle("logistics_msa", _logistics)


ORACLES: Dict[str, GoldOracle] = {
    oracle.contract_id: oracle
    for oracle in (
        energy_sup_oracle,
        muni_ifb_oracle,
        health_ppo_oracle,
        logistics_msa_oracle,
    )
}
