"""Dataset sample for en-route forecasting.

A sample carries the observed window, the (possibly zero-filled) route
plan, one weather grid per observed step, and the future positions used
as the training target. Targets may be empty at inference time.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..constraints import GeoPoint
from .weather import WeatherGrid

PLAN_LENGTH = 10
DEFAULT_T_OBS = 18
DEFAULT_HORIZON = 30


@dataclass(frozen=True)
class EnrouteSample:
    flight_id: str
    observed: tuple[GeoPoint, ...]
    plan: tuple[GeoPoint, ...]
    plan_present: bool
    weather: tuple[WeatherGrid, ...]
    target: tuple[GeoPoint, ...] = ()

    def __post_init__(self):
        if len(self.observed) < 2:
            raise ValueError(f"need at least 2 observed points, got {len(self.observed)}")
        if len(self.plan) != PLAN_LENGTH:
            raise ValueError(f"plan must hold {PLAN_LENGTH} waypoints, got {len(self.plan)}")
        if len(self.weather) != len(self.observed):
            raise ValueError(
                f"need one weather grid per observed point: "
                f"{len(self.weather)} grids for {len(self.observed)} points"
            )
