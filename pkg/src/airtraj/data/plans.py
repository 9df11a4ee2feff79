"""Flight-plan handling: waypoint lookup and partitioning to 10 points.

Plans are lists of waypoint ids resolved against a lookup table; each plan
is reduced (or padded) to exactly 10 characteristic points with the
original endpoints preserved. A missing plan becomes 10 all-zero points.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from typing import Mapping, Sequence

from ..constraints import GeoPoint, cross_track_distance, haversine

PLAN_LENGTH = 10
ZERO_POINT = GeoPoint(0.0, 0.0, 0.0)


@dataclass(frozen=True)
class FlightPlan:
    """Exactly 10 waypoints; ``present`` is False for zero-filled plans."""

    plan_id: str
    waypoints: tuple[GeoPoint, ...]
    present: bool

    def __post_init__(self):
        if len(self.waypoints) != PLAN_LENGTH:
            raise ValueError(f"plan must hold {PLAN_LENGTH} waypoints, got {len(self.waypoints)}")


def load_waypoints(path: str) -> dict[str, GeoPoint]:
    """Read an `id,lat,lon` CSV lookup table."""
    table = {}
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        required = {"id", "lat", "lon"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise ValueError(f"waypoint table must have columns id,lat,lon: {path}")
        for row in reader:
            table[row["id"].strip()] = GeoPoint(float(row["lat"]), float(row["lon"]), 0.0)
    return table


def load_plans(path: str) -> dict[str, list[str]]:
    """Read a JSON object mapping flight id to a waypoint-id list."""
    with open(path, encoding="utf-8") as f:
        plans = json.load(f)
    if not isinstance(plans, dict):
        raise ValueError(f"plan file must be a JSON object: {path}")
    return {str(k): [str(w) for w in v] for k, v in plans.items()}


def _thin_to(points: list[GeoPoint], target: int) -> list[GeoPoint]:
    """Keep endpoints, then greedily insert the point deviating most from
    the chord between its already-selected neighbors."""
    selected = [0, len(points) - 1]
    while len(selected) < target:
        best, best_dev = None, -1.0
        for gap_lo, gap_hi in zip(selected, selected[1:]):
            for j in range(gap_lo + 1, gap_hi):
                dev = cross_track_distance(points[gap_lo], points[gap_hi], points[j])
                if dev > best_dev:
                    best, best_dev = j, dev
        if best is None:  # no interior candidates left
            break
        selected = sorted(selected + [best])
    return [points[i] for i in selected]


def _pad_to(points: list[GeoPoint], target: int) -> list[GeoPoint]:
    """Resample the polyline at ``target`` arc-length-uniform positions."""
    seg = [haversine(a, b) for a, b in zip(points, points[1:])]
    total = sum(seg)
    if total == 0.0:
        return [points[0]] * (target - 1) + [points[-1]]
    out = [points[0]]
    cum = [0.0]
    for s in seg:
        cum.append(cum[-1] + s)
    k_seg = 0
    for k in range(1, target - 1):
        s_k = total * k / (target - 1)
        while cum[k_seg + 1] < s_k:
            k_seg += 1
        a, b = points[k_seg], points[k_seg + 1]
        frac = (s_k - cum[k_seg]) / (cum[k_seg + 1] - cum[k_seg])
        out.append(
            GeoPoint(
                lat=a.lat + frac * (b.lat - a.lat),
                lon=a.lon + frac * (b.lon - a.lon),
                alt=a.alt + frac * (b.alt - a.alt),
            )
        )
    out.append(points[-1])
    return out


def plan_to_waypoints(
    ids: Sequence[str] | None,
    lookup: Mapping[str, GeoPoint],
    plan_id: str = "",
) -> FlightPlan:
    """Resolve waypoint ids and partition to exactly 10 characteristic points.

    Longer plans keep the endpoints and greedily retain maximum-deviation
    interior points; shorter ones are padded by arc-length resampling along
    the polyline. ``ids=None`` or an empty list yields the zero-filled plan.
    """
    if not ids:
        return FlightPlan(plan_id=plan_id, waypoints=(ZERO_POINT,) * PLAN_LENGTH, present=False)
    unknown = [i for i in ids if i not in lookup]
    if unknown:
        raise ValueError(f"unknown waypoint ids {unknown} in plan {plan_id or '<anonymous>'}")
    raw = [lookup[i] for i in ids]
    if len(raw) == PLAN_LENGTH:
        chosen = raw
    elif len(raw) > PLAN_LENGTH:
        chosen = _thin_to(raw, PLAN_LENGTH)
    elif len(raw) == 1:
        chosen = raw * PLAN_LENGTH
    else:
        chosen = _pad_to(raw, PLAN_LENGTH)
    return FlightPlan(plan_id=plan_id, waypoints=tuple(chosen), present=True)
