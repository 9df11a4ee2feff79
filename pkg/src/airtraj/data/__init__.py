"""Track ingestion, resampling, flight plans, splits, and synthetic scenes."""

from .ingest import (
    FT_TO_M,
    KT_TO_MPS,
    TRACK_COLUMNS,
    Flight,
    ParseReport,
    TrackPoint,
    filter_trainers,
    parse_tracks,
    resample_10s,
    split_by_days,
    write_tracks,
)
from .plans import FlightPlan, load_plans, load_waypoints, plan_to_waypoints
from .synth import (
    EnrouteScenarioConfig,
    Scenario,
    ScenarioConfig,
    gen_enroute_scenario,
    gen_phase_profile,
    gen_synthetic_scenarios,
)

__all__ = [
    "FT_TO_M",
    "KT_TO_MPS",
    "TRACK_COLUMNS",
    "EnrouteScenarioConfig",
    "Flight",
    "FlightPlan",
    "ParseReport",
    "Scenario",
    "ScenarioConfig",
    "TrackPoint",
    "filter_trainers",
    "gen_enroute_scenario",
    "gen_phase_profile",
    "gen_synthetic_scenarios",
    "load_plans",
    "load_waypoints",
    "parse_tracks",
    "plan_to_waypoints",
    "resample_10s",
    "split_by_days",
    "write_tracks",
]
