"""Track CSV ingestion, resampling to the 10-second grid, and day splits.

On-disk units follow aviation convention (altitude ft, speed kt, vertical
rate ft/min); altitudes are exposed in meters for model math. The CSV
format is versioned by its exact header line.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from ..constraints import GeoPoint, haversine, initial_bearing

FT_TO_M = 0.3048
KT_TO_MPS = 1852.0 / 3600.0
MPS_TO_KT = 1.0 / KT_TO_MPS

TRACK_COLUMNS = (
    "timestamp",
    "flight_id",
    "lat",
    "lon",
    "alt_ft",
    "gs_kt",
    "vrate_fpm",
    "heading_deg",
    "actype",
)

STEP_S = 10.0
MAX_GAP_S = 120.0
SECONDS_PER_DAY = 86_400.0


@dataclass(frozen=True)
class TrackPoint:
    """One surveillance report; altitude is stored in feet as ingested."""

    t: float
    lat: float
    lon: float
    alt_ft: float
    gs_kt: float
    vrate_fpm: float
    heading_deg: float | None = None
    actype: str | None = None

    @property
    def alt(self) -> float:
        """Altitude in meters."""
        return self.alt_ft * FT_TO_M

    def point(self) -> GeoPoint:
        return GeoPoint(self.lat, self.lon, self.alt)


@dataclass
class Flight:
    """A time-sorted sequence of points sharing one flight id."""

    flight_id: str
    points: list[TrackPoint]

    @property
    def actype(self) -> str | None:
        for p in self.points:
            if p.actype:
                return p.actype
        return None

    @property
    def day(self) -> int:
        return int(self.points[0].t // SECONDS_PER_DAY)


@dataclass
class ParseReport:
    """Row accounting for one parse pass."""

    rows_read: int = 0
    rows_kept: int = 0
    skipped: dict[str, int] = field(default_factory=dict)

    def skip(self, reason: str) -> None:
        self.skipped[reason] = self.skipped.get(reason, 0) + 1

    @property
    def rows_skipped(self) -> int:
        return sum(self.skipped.values())


def _parse_row(row: dict[str, str]) -> TrackPoint | str:
    """Build a point from one CSV row, or return a skip reason."""
    try:
        t = float(row["timestamp"])
        lat = float(row["lat"])
        lon = float(row["lon"])
        alt_ft = float(row["alt_ft"])
        gs_kt = float(row["gs_kt"])
        vrate = float(row["vrate_fpm"])
        heading = float(row["heading_deg"]) if row["heading_deg"] else None
    except (ValueError, TypeError):
        return "malformed"
    values = [t, lat, lon, alt_ft, gs_kt, vrate] + ([heading] if heading is not None else [])
    if not all(math.isfinite(v) for v in values):
        return "malformed"
    if not -90.0 <= lat <= 90.0 or not -180.0 <= lon < 180.0:
        return "out_of_range"
    if gs_kt < 0.0 or not -3000.0 <= alt_ft <= 100_000.0:
        return "out_of_range"
    return TrackPoint(
        t=t,
        lat=lat,
        lon=lon,
        alt_ft=alt_ft,
        gs_kt=gs_kt,
        vrate_fpm=vrate,
        heading_deg=heading % 360.0 if heading is not None else None,
        actype=row["actype"] or None,
    )


def parse_tracks(path: str) -> tuple[list[Flight], ParseReport]:
    """Read a track CSV into time-sorted flights plus a row report.

    Malformed or out-of-range rows are skipped and counted; duplicate
    timestamps within a flight keep the first occurrence.
    """
    report = ParseReport()
    groups: dict[str, list[TrackPoint]] = {}
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None:
            raise ValueError(f"empty track file: {path}")
        missing = [c for c in TRACK_COLUMNS if c not in reader.fieldnames]
        if missing:
            raise ValueError(f"track file missing columns {missing} in {path}")
        for row in reader:
            report.rows_read += 1
            fid = (row.get("flight_id") or "").strip()
            if not fid:
                report.skip("missing_id")
                continue
            parsed = _parse_row(row)
            if isinstance(parsed, str):
                report.skip(parsed)
                continue
            groups.setdefault(fid, []).append(parsed)

    flights = []
    for fid in sorted(groups):
        pts = sorted(groups[fid], key=lambda p: p.t)
        unique: list[TrackPoint] = []
        for p in pts:
            if unique and p.t == unique[-1].t:
                report.skip("duplicate_time")
                continue
            unique.append(p)
        report.rows_kept += len(unique)
        flights.append(Flight(flight_id=fid, points=unique))
    return flights, report


def write_tracks(path: str, flights: Iterable[Flight]) -> None:
    """Inverse of parse_tracks; floats are written with full precision."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(TRACK_COLUMNS)
        for flight in flights:
            for p in flight.points:
                writer.writerow(
                    [
                        repr(p.t),
                        flight.flight_id,
                        repr(p.lat),
                        repr(p.lon),
                        repr(p.alt_ft),
                        repr(p.gs_kt),
                        repr(p.vrate_fpm),
                        "" if p.heading_deg is None else repr(p.heading_deg),
                        p.actype or "",
                    ]
                )


def filter_trainers(flights: Iterable[Flight], blocklist: Iterable[str]) -> list[Flight]:
    """Drop flights whose aircraft type or flight id is blocklisted."""
    block = set(blocklist)
    if not block:
        return list(flights)
    return [f for f in flights if f.flight_id not in block and (f.actype or "") not in block]


def _derive(points: list[TrackPoint]) -> list[TrackPoint]:
    """Recompute ground speed, vertical rate, and heading from geometry."""
    out = []
    n = len(points)
    for i, p in enumerate(points):
        j = i if i + 1 < n else i - 1  # last point reuses its inbound segment
        a, b = points[j], points[j + 1]
        dt = b.t - a.t
        dist = haversine(a.point(), b.point())
        gs_kt = (dist / dt) * MPS_TO_KT
        vrate = (b.alt_ft - a.alt_ft) / dt * 60.0
        heading = initial_bearing(a.point(), b.point()) if dist > 0.0 else (out[-1].heading_deg if out else 0.0)
        out.append(
            TrackPoint(
                t=p.t,
                lat=p.lat,
                lon=p.lon,
                alt_ft=p.alt_ft,
                gs_kt=gs_kt,
                vrate_fpm=vrate,
                heading_deg=heading,
                actype=p.actype,
            )
        )
    return out


def resample_10s(flight: Flight, step: float = STEP_S, max_gap: float = MAX_GAP_S) -> list[Flight]:
    """Interpolate a flight onto a uniform grid anchored at its first timestamp.

    Gaps longer than ``max_gap`` split the flight into separate outputs;
    chunks too short to hold two grid points are dropped. Ground speed,
    vertical rate, and heading are recomputed from the resampled geometry.
    """
    if len(flight.points) < 2:
        raise ValueError(f"flight {flight.flight_id!r} has fewer than 2 points")

    chunks: list[list[TrackPoint]] = [[flight.points[0]]]
    for prev, cur in zip(flight.points, flight.points[1:]):
        if cur.t - prev.t > max_gap:
            chunks.append([])
        chunks[-1].append(cur)

    out = []
    n_emitted = 0
    for chunk in chunks:
        if len(chunk) < 2:
            continue
        t = np.array([p.t for p in chunk])
        grid = t[0] + step * np.arange(int((t[-1] - t[0]) // step) + 1)
        if grid.size < 2:
            continue
        lat = np.interp(grid, t, [p.lat for p in chunk])
        lon = np.interp(grid, t, [p.lon for p in chunk])
        alt = np.interp(grid, t, [p.alt_ft for p in chunk])
        actype = next((p.actype for p in chunk if p.actype), None)
        pts = [
            TrackPoint(t=float(g), lat=float(la), lon=float(lo), alt_ft=float(al), gs_kt=0.0, vrate_fpm=0.0, actype=actype)
            for g, la, lo, al in zip(grid, lat, lon, alt)
        ]
        fid = flight.flight_id if n_emitted == 0 else f"{flight.flight_id}/{n_emitted}"
        out.append(Flight(flight_id=fid, points=_derive(pts)))
        n_emitted += 1
    return out


def split_by_days(
    flights: Sequence[Flight],
    ratios: tuple[float, float, float] = (0.6, 0.2, 0.2),
    seed: int = 0,
) -> tuple[list[Flight], list[Flight], list[Flight]]:
    """Partition flights into train/val/test with whole days kept together."""
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1: {ratios}")
    days = sorted({f.day for f in flights})
    n_splits = sum(1 for r in ratios if r > 0.0)
    if len(days) < n_splits:
        raise ValueError(f"{len(days)} days cannot fill {n_splits} splits")
    order = np.random.default_rng(seed).permutation(len(days))
    shuffled = [days[i] for i in order]
    n_train = round(ratios[0] * len(days))
    n_val = round(ratios[1] * len(days))
    train_days = set(shuffled[:n_train])
    val_days = set(shuffled[n_train : n_train + n_val])
    splits: tuple[list[Flight], ...] = ([], [], [])
    for f in flights:
        if f.day in train_days:
            splits[0].append(f)
        elif f.day in val_days:
            splits[1].append(f)
        else:
            splits[2].append(f)
    return splits
