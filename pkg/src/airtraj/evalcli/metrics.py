"""Trajectory error metrics and their per-run summary report.

Displacement metrics are 3-D distances in meters: great-circle horizontal
separation combined Euclidean-style with the altitude gap (dist3d).
Component errors keep their native units, decimal degrees for latitude
and longitude and meters for altitude.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..constraints import GeoPoint, dist3d, wrap_angle_deg

__all__ = ["MetricsReport", "ade", "fde", "mae_components", "summarize"]


def _check_pair(pred: Sequence[GeoPoint], truth: Sequence[GeoPoint]) -> None:
    if len(pred) != len(truth):
        raise ValueError(
            f"length mismatch: {len(pred)} predicted vs {len(truth)} true points"
        )
    if not len(pred):
        raise ValueError("need at least one point per trajectory")


def ade(pred: Sequence[GeoPoint], truth: Sequence[GeoPoint]) -> float:
    """Mean 3-D displacement over all steps, meters."""
    _check_pair(pred, truth)
    return float(np.mean([dist3d(p, t) for p, t in zip(pred, truth)]))


def fde(pred: Sequence[GeoPoint], truth: Sequence[GeoPoint]) -> float:
    """Displacement at the final step only, meters."""
    _check_pair(pred, truth)
    return dist3d(pred[-1], truth[-1])


def mae_components(
    pred: Sequence[GeoPoint], truth: Sequence[GeoPoint]
) -> tuple[float, float, float]:
    """Per-component mean absolute error as (lat deg, lon deg, alt m).

    Longitude differences are wrapped so a pair straddling the
    antimeridian is scored by the short way around.
    """
    _check_pair(pred, truth)
    lat = np.mean([abs(p.lat - t.lat) for p, t in zip(pred, truth)])
    lon = np.mean([abs(wrap_angle_deg(p.lon - t.lon)) for p, t in zip(pred, truth)])
    alt = np.mean([abs(p.alt - t.alt) for p, t in zip(pred, truth)])
    return float(lat), float(lon), float(alt)


@dataclass(frozen=True)
class MetricsReport:
    """Error summary for one model over one evaluation corpus."""

    ade: float  # m
    fde: float  # m
    mae_lat: float  # deg
    mae_lon: float  # deg
    mae_alt: float  # m
    n_trajectories: int
    horizon: int

    def __post_init__(self):
        values = (self.ade, self.fde, self.mae_lat, self.mae_lon, self.mae_alt)
        if any(not np.isfinite(v) or v < 0.0 for v in values):
            raise ValueError(f"metrics must be finite and non-negative, got {values}")
        if self.n_trajectories < 1:
            raise ValueError(f"report needs at least 1 trajectory, got {self.n_trajectories}")
        if self.horizon < 1:
            raise ValueError(f"horizon must be positive, got {self.horizon}")


def summarize(
    pairs: Sequence[tuple[Sequence[GeoPoint], Sequence[GeoPoint]]],
) -> MetricsReport:
    """Aggregate (predicted, true) trajectory pairs into one report.

    All pairs must share one horizon so each flight weighs equally in the
    means. Sums reduce in input order, so a fixed corpus always produces
    a bit-identical report.
    """
    if not pairs:
        raise ValueError("no trajectory pairs to summarize")
    horizons = {len(truth) for _, truth in pairs}
    if len(horizons) != 1:
        raise ValueError(f"trajectory pairs mix horizons {sorted(horizons)}")
    ades, fdes, maes = [], [], []
    for pred, truth in pairs:
        ades.append(ade(pred, truth))
        fdes.append(fde(pred, truth))
        maes.append(mae_components(pred, truth))
    mae = np.mean(np.asarray(maes), axis=0)
    return MetricsReport(
        ade=float(np.mean(ades)),
        fde=float(np.mean(fdes)),
        mae_lat=float(mae[0]),
        mae_lon=float(mae[1]),
        mae_alt=float(mae[2]),
        n_trajectories=len(pairs),
        horizon=horizons.pop(),
    )
