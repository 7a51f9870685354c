"""Bundled example contracts with manifests, used by the test kit and docs.

Four domains ship with the package:

========================  =============================================
``energy_sup``            indexed commodity price formula
``muni_ifb``              municipal fee schedule, three dated versions
``health_ppo``            ambulance benefit determination, five cases
``logistics_msa``         freight rating with a 48-bracket fuel table
========================  =============================================
"""

from __future__ import annotations

import importlib.resources
from pathlib import Path
from typing import List, Tuple

from ..loader import load_contract_file
from ..model import ContractDefinition
from ..testkit.events import FixtureManifest

FIXTURE_IDS: Tuple[str, ...] = ("energy_sup", "muni_ifb", "health_ppo", "logistics_msa")


def fixture_path(name: str) -> Path:
    """Filesystem path of a bundled contract (``<id>.dacl.json``) or
    manifest (``<id>.manifest.json``); bare ids resolve to the contract."""
    if "." not in name:
        name = f"{name}.dacl.json"
    path = Path(str(importlib.resources.files(__package__) / name))
    if not path.is_file():
        raise FileNotFoundError(f"no bundled fixture '{name}'")
    return path


def load_fixture(fixture_id: str) -> ContractDefinition:
    return load_contract_file(fixture_path(f"{fixture_id}.dacl.json"))


def load_manifest(fixture_id: str) -> FixtureManifest:
    return FixtureManifest.from_json(
        fixture_path(f"{fixture_id}.manifest.json").read_text(encoding="utf-8")
    )


def all_fixtures() -> List[Tuple[ContractDefinition, FixtureManifest]]:
    return [(load_fixture(fid), load_manifest(fid)) for fid in FIXTURE_IDS]
