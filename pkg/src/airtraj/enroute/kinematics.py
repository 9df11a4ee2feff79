"""Per-step velocity/angle/position triples derived from a track.

A cruise track sampled at a fixed interval is summarised step by step as
(V, Theta, T): velocity components in meters per second, track angle in
degrees clockwise from north, and the arrival position. These triples are
both the kinematic features fed to the en-route forecaster and the terms
its loss compares.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..constraints import GeoPoint, haversine, initial_bearing

STEP_S = 10.0


@dataclass(frozen=True, eq=False)
class KinematicTriple:
    """One step of motion: where it arrived and how it moved getting there.

    ``v`` holds (east, north, up) components in m/s; ``theta_deg`` is the
    ground-track angle in [0, 360); ``point`` is the arrival position.
    """

    v: np.ndarray
    theta_deg: float
    point: GeoPoint

    def __post_init__(self):
        v = np.asarray(self.v, dtype=np.float64)
        if v.shape != (3,) or not np.all(np.isfinite(v)):
            raise ValueError(f"velocity must be a finite 3-vector, got {self.v!r}")
        theta = float(self.theta_deg)
        if not (0.0 <= theta < 360.0) or not math.isfinite(theta):
            raise ValueError(f"track angle must lie in [0, 360), got {self.theta_deg!r}")
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "theta_deg", theta)

    @property
    def ground_speed(self) -> float:
        return float(math.hypot(self.v[0], self.v[1]))


def derive_kinematics(track: Sequence[GeoPoint], dt: float = STEP_S) -> list[KinematicTriple]:
    """Finite-difference triples for each step of ``track``.

    Returns one triple per consecutive pair, so a track of n points yields
    n - 1 triples. A stationary step keeps V = 0 and carries the previous
    step's angle forward (0 for a leading stationary step). A vertical-only
    step likewise carries the angle and gets a pure vertical velocity.
    """
    pts = list(track)
    if len(pts) < 2:
        raise ValueError(f"need at least 2 track points, got {len(pts)}")
    if dt <= 0.0:
        raise ValueError(f"step interval must be positive, got {dt}")

    out: list[KinematicTriple] = []
    theta_prev = 0.0
    for a, b in zip(pts, pts[1:]):
        ground = haversine(a, b)
        v_up = (b.alt - a.alt) / dt
        if ground > 0.0:
            theta = initial_bearing(a, b)
            v_h = ground / dt
            v = np.array([
                v_h * math.sin(math.radians(theta)),
                v_h * math.cos(math.radians(theta)),
                v_up,
            ])
        else:
            theta = theta_prev
            v = np.array([0.0, 0.0, v_up])
        out.append(KinematicTriple(v=v, theta_deg=theta, point=b))
        theta_prev = theta
    return out
