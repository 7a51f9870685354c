"""Verification toolkit: gold oracles, event generation and concordance."""

from .concordance import ClauseDiff, Verdict, concordance
from .events import (
    EventRecord,
    FixtureManifest,
    StateTarget,
    generate_events,
    oracle_expected,
    state_targets,
)
from .oracles import (
    ORACLES,
    GoldOracle,
    OracleGap,
    energy_sup_oracle,
    health_ppo_oracle,
    logistics_msa_oracle,
    muni_ifb_oracle,
)

__all__ = [
    "ClauseDiff",
    "Verdict",
    "concordance",
    "EventRecord",
    "FixtureManifest",
    "StateTarget",
    "generate_events",
    "oracle_expected",
    "state_targets",
    "ORACLES",
    "GoldOracle",
    "OracleGap",
    "energy_sup_oracle",
    "health_ppo_oracle",
    "logistics_msa_oracle",
    "muni_ifb_oracle",
]
