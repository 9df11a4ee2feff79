"""Flight-envelope constraints: geodesy, limit fitting, and candidate gating.

Climb/descend limits are fitted from labeled tracks (max climb angle between
the first point above 1500 ft and the top of climb, and symmetrically for
descent); the turn-rate limit comes from bank angle when present, otherwise
from empirical heading rates. During rollout, sampled candidate points are
rejection-checked against the fitted set.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .neuralcore import GaussianParams3, gaussian3_sample

log = logging.getLogger(__name__)

EARTH_RADIUS_M = 6_371_000.0
CLIMB_FLOOR_M = 457.2  # 1500 ft exactly
TURN_RATE_COEFF = 1091.0  # deg/s = 1091 * tan(bank) / v_knots

TAKEOFF = "takeoff"
ENROUTE = "enroute"
APPROACH = "approach"
PHASES = (TAKEOFF, ENROUTE, APPROACH)


# ---------------------------------------------------------------------------
# geodesy


@dataclass(frozen=True)
class GeoPoint:
    """A position: latitude/longitude in degrees, altitude in meters."""

    lat: float
    lon: float
    alt: float

    def __post_init__(self):
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"latitude out of range: {self.lat}")
        if not -180.0 <= self.lon < 180.0:
            raise ValueError(f"longitude out of range: {self.lon}")
        if not math.isfinite(self.alt):
            raise ValueError(f"altitude not finite: {self.alt}")


def wrap_angle_deg(x: float) -> float:
    """Wrap an angle difference into (-180, 180]."""
    return x - 360.0 * math.ceil((x - 180.0) / 360.0)


def normalize_lon(lon: float) -> float:
    """Normalize a longitude into [-180, 180)."""
    return (lon + 180.0) % 360.0 - 180.0


def haversine(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance in meters on a 6,371,000 m sphere; ignores altitude."""
    phi_a, phi_b = math.radians(a.lat), math.radians(b.lat)
    dphi = phi_b - phi_a
    dlam = math.radians(b.lon - a.lon)
    h = math.sin(dphi / 2.0) ** 2 + math.cos(phi_a) * math.cos(phi_b) * math.sin(dlam / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(h)))


def dist3d(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance combined with the altitude gap, in meters."""
    return math.hypot(haversine(a, b), b.alt - a.alt)


def initial_bearing(a: GeoPoint, b: GeoPoint) -> float:
    """Initial great-circle bearing from a to b, degrees in [0, 360).

    Identical horizontal positions give 0 by convention.
    """
    if a.lat == b.lat and a.lon == b.lon:
        return 0.0
    phi_a, phi_b = math.radians(a.lat), math.radians(b.lat)
    dlam = math.radians(b.lon - a.lon)
    y = math.sin(dlam) * math.cos(phi_b)
    x = math.cos(phi_a) * math.sin(phi_b) - math.sin(phi_a) * math.cos(phi_b) * math.cos(dlam)
    return math.degrees(math.atan2(y, x)) % 360.0


def cross_track_distance(a: GeoPoint, b: GeoPoint, p: GeoPoint) -> float:
    """Unsigned distance in meters from p to the great circle through a and b.

    Degenerates to haversine(a, p) when a and b coincide horizontally.
    """
    if a.lat == b.lat and a.lon == b.lon:
        return haversine(a, p)
    d13 = haversine(a, p) / EARTH_RADIUS_M
    t13 = math.radians(initial_bearing(a, p))
    t12 = math.radians(initial_bearing(a, b))
    return abs(math.asin(math.sin(d13) * math.sin(t13 - t12)) * EARTH_RADIUS_M)


def destination_point(origin: GeoPoint, bearing_deg: float, distance_m: float, alt: float | None = None) -> GeoPoint:
    """Point reached from origin along a great circle; altitude is carried over unless given."""
    delta = distance_m / EARTH_RADIUS_M
    theta = math.radians(bearing_deg)
    phi1 = math.radians(origin.lat)
    lam1 = math.radians(origin.lon)
    phi2 = math.asin(math.sin(phi1) * math.cos(delta) + math.cos(phi1) * math.sin(delta) * math.cos(theta))
    lam2 = lam1 + math.atan2(
        math.sin(theta) * math.sin(delta) * math.cos(phi1),
        math.cos(delta) - math.sin(phi1) * math.sin(phi2),
    )
    return GeoPoint(
        lat=math.degrees(phi2),
        lon=normalize_lon(math.degrees(lam2)),
        alt=origin.alt if alt is None else alt,
    )


# ---------------------------------------------------------------------------
# constraint set


@dataclass(frozen=True)
class ConstraintSet:
    """Fitted motion limits used to gate sampled trajectory points."""

    theta_c: float  # max climb angle, deg
    theta_d: float  # max descend angle, deg
    omega_rot: float  # max turn rate, deg/s
    max_resample: int = 100
    fitted_from: str = ""

    def __post_init__(self):
        if not 0.0 < self.theta_c < 90.0:
            raise ValueError(f"theta_c out of (0, 90): {self.theta_c}")
        if not 0.0 < self.theta_d < 90.0:
            raise ValueError(f"theta_d out of (0, 90): {self.theta_d}")
        if not self.omega_rot > 0.0:
            raise ValueError(f"omega_rot must be positive: {self.omega_rot}")
        if self.max_resample < 1:
            raise ValueError(f"max_resample must be >= 1: {self.max_resample}")


class ConstraintsUnavailableError(ValueError):
    """Raised when the data cannot support fitting; callers skip gating."""


CONSTRAINTS_MAGIC = "CONSTRAINTS1"


def save_constraints(path: str, cs: ConstraintSet) -> None:
    lines = [
        CONSTRAINTS_MAGIC,
        f"theta_c_deg={cs.theta_c!r}",
        f"theta_d_deg={cs.theta_d!r}",
        f"omega_rot_deg_s={cs.omega_rot!r}",
        f"max_resample={cs.max_resample}",
        f"fitted_from={cs.fitted_from}",
    ]
    with open(path, "w", encoding="ascii") as f:
        f.write("\n".join(lines) + "\n")


def load_constraints(path: str) -> ConstraintSet:
    with open(path, encoding="ascii") as f:
        lines = [line.rstrip("\n") for line in f]
    if not lines or lines[0] != CONSTRAINTS_MAGIC:
        raise ValueError(f"not a {CONSTRAINTS_MAGIC} file: {path}")
    kv = {}
    for line in lines[1:]:
        if not line:
            continue
        key, _, value = line.partition("=")
        kv[key] = value
    return ConstraintSet(
        theta_c=float(kv["theta_c_deg"]),
        theta_d=float(kv["theta_d_deg"]),
        omega_rot=float(kv["omega_rot_deg_s"]),
        max_resample=int(kv["max_resample"]),
        fitted_from=kv.get("fitted_from", ""),
    )


# ---------------------------------------------------------------------------
# fitting

# A "labeled flight" for fitting is (phase, points); points need lat/lon/alt
# GeoPoint-compatible fields, and for fit_rot also t, gs_kt, heading_deg.


def _geo(p) -> GeoPoint:
    if isinstance(p, GeoPoint):
        return p
    return GeoPoint(p.lat, p.lon, p.alt)


def _climb_angle(points: Sequence, rising: bool) -> float | None:
    """Angle between crossing 1500 ft and the altitude extreme, in degrees."""
    alts = [p.alt for p in points]
    top = max(range(len(points)), key=lambda i: alts[i]) if rising else None
    if rising:
        start = next((i for i, a in enumerate(alts) if a > CLIMB_FLOOR_M), None)
        if start is None or top is None or top <= start:
            return None
        lo, hi = start, top
    else:
        # descent: from the last altitude maximum down to the last point above the floor
        top = max(range(len(points)), key=lambda i: (alts[i], i))
        end = None
        for i in range(len(points) - 1, -1, -1):
            if alts[i] > CLIMB_FLOOR_M:
                end = i
                break
        if end is None or end <= top:
            return None
        lo, hi = top, end
    dh = abs(alts[hi] - alts[lo])
    dd = haversine(_geo(points[lo]), _geo(points[hi]))
    if dd == 0.0:
        log.warning("flight with zero ground distance between fit endpoints; skipped")
        return None
    return math.degrees(math.atan(dh / dd))


def fit_climb_descend(
    flights: Iterable[tuple[str, Sequence]],
    aggregate: str = "max",
    percentile: float = 99.5,
) -> tuple[float, float]:
    """Fit (theta_c, theta_d) from phase-labeled flights.

    Takeoff-labeled flights contribute climb angles measured from the first
    point above 1500 ft (457.2 m) to the top of climb; approach-labeled
    flights contribute the symmetric descent angles. ``aggregate`` is the
    dataset reduction: "max" (default) or "percentile".
    """
    if aggregate not in ("max", "percentile"):
        raise ValueError(f"unknown aggregate {aggregate!r}")
    climb, descend = [], []
    for phase, points in flights:
        phase = phase.lower()
        if len(points) < 2:
            continue
        if phase == TAKEOFF:
            angle = _climb_angle(points, rising=True)
            if angle is not None:
                climb.append(angle)
        elif phase == APPROACH:
            angle = _climb_angle(points, rising=False)
            if angle is not None:
                descend.append(angle)
    if not climb or not descend:
        raise ConstraintsUnavailableError(
            "constraints unavailable: no qualifying climb or descent flights"
        )
    if aggregate == "max":
        return max(climb), max(descend)
    return (
        float(np.percentile(climb, percentile)),
        float(np.percentile(descend, percentile)),
    )


def fit_rot(flights: Iterable[Sequence]) -> float:
    """Fit the max turn rate (deg/s) over all flights.

    Points with a ``bank_deg`` attribute use 1091 * tan(bank) / gs_kt;
    otherwise the empirical |heading change| / dt per consecutive pair.
    """
    best = None
    for points in flights:
        for i, p in enumerate(points):
            bank = getattr(p, "bank_deg", None)
            if bank is not None and p.gs_kt and p.gs_kt > 0.0:
                rate = TURN_RATE_COEFF * abs(math.tan(math.radians(bank))) / p.gs_kt
            elif i > 0 and getattr(p, "heading_deg", None) is not None and getattr(points[i - 1], "heading_deg", None) is not None:
                dt = p.t - points[i - 1].t
                if dt <= 0.0:
                    continue
                rate = abs(wrap_angle_deg(p.heading_deg - points[i - 1].heading_deg)) / dt
            else:
                continue
            if best is None or rate > best:
                best = rate
    if best is None:
        raise ConstraintsUnavailableError("constraints unavailable: no heading or bank data")
    return best


# ---------------------------------------------------------------------------
# checking and gated sampling


@dataclass(frozen=True)
class CheckResult:
    """Outcome of one candidate-point check against a constraint set."""

    passed: bool
    violations: tuple[str, ...]
    angle_deg: float
    turn_rate_deg_s: float
    score: float  # normalized total violation; 0 when passed


def check(
    prev: GeoPoint,
    cand: GeoPoint,
    phase: str,
    cs: ConstraintSet,
    dt: float,
    prev_heading: float | None = None,
) -> CheckResult:
    """Gate one step from prev to cand against climb/descend and turn limits.

    The en-route phase always passes. The implied vertical angle is
    atan(|dalt| / ground distance); the implied turn rate compares the
    step's bearing with ``prev_heading`` when given.
    """
    if dt <= 0.0:
        raise ValueError(f"dt must be positive: {dt}")
    if phase.lower() == ENROUTE:
        return CheckResult(True, (), 0.0, 0.0, 0.0)

    ground = haversine(prev, cand)
    dalt = cand.alt - prev.alt
    if ground == 0.0:
        if dalt != 0.0:
            return CheckResult(False, ("vertical jump",), 90.0, 0.0, math.inf)
        return CheckResult(True, (), 0.0, 0.0, 0.0)

    angle = math.degrees(math.atan(abs(dalt) / ground))
    limit = cs.theta_c if dalt > 0.0 else cs.theta_d
    violations = []
    score = 0.0
    if angle > limit:
        violations.append("angle")
        score += (angle - limit) / limit

    rate = 0.0
    if prev_heading is not None:
        rate = abs(wrap_angle_deg(initial_bearing(prev, cand) - prev_heading)) / dt
        if rate > cs.omega_rot:
            violations.append("turn")
            score += (rate - cs.omega_rot) / cs.omega_rot

    return CheckResult(not violations, tuple(violations), angle, rate, score)


@dataclass(frozen=True)
class InferReport:
    """How a gated sample was obtained."""

    accepted: bool  # True when the returned point passed check()
    n_samples: int
    fallback: bool
    result: CheckResult


def infer_step(
    dist: GaussianParams3,
    prev: GeoPoint,
    phase: str,
    cs: ConstraintSet | None,
    rng: np.random.Generator,
    dt: float = 10.0,
    prev_heading: float | None = None,
) -> tuple[GeoPoint, InferReport]:
    """Draw a constraint-compliant next point from a (lat, lon, alt) Gaussian.

    Up to ``cs.max_resample`` candidates are drawn; the first passing one is
    returned. If none passes, the minimum-violation candidate is returned
    with ``fallback=True``. With ``cs=None`` gating is skipped entirely.
    """

    def to_point(sample: np.ndarray) -> GeoPoint:
        return GeoPoint(
            lat=float(np.clip(sample[0], -90.0, 90.0)),
            lon=normalize_lon(float(sample[1])),
            alt=float(sample[2]),
        )

    if cs is None:
        point = to_point(gaussian3_sample(dist, rng))
        return point, InferReport(True, 1, False, CheckResult(True, (), 0.0, 0.0, 0.0))

    best: tuple[float, GeoPoint, CheckResult] | None = None
    for k in range(1, cs.max_resample + 1):
        cand = to_point(gaussian3_sample(dist, rng))
        result = check(prev, cand, phase, cs, dt, prev_heading)
        if result.passed:
            return cand, InferReport(True, k, False, result)
        if best is None or result.score < best[0]:
            best = (result.score, cand, result)
    assert best is not None
    return best[1], InferReport(False, cs.max_resample, True, best[2])
