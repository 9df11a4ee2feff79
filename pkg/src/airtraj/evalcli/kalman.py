"""Per-axis linear Kalman baselines: filter an observed window, extrapolate.

The track is unrolled into a local frame (meters north and east of the
first point, altitude relative to it), each axis runs an independent
filter with zero process noise, and the final state extrapolates open
loop. With zero process noise and an exact diffuse start the filter
reduces to recursive least squares on the motion model, which is what
makes the noiseless cases exact.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from ..constraints import EARTH_RADIUS_M, GeoPoint, normalize_lon, wrap_angle_deg
from ..enroute.kinematics import STEP_S

__all__ = ["MODES", "kalman_baseline", "naive_extrapolation"]

MODES = ("linear_accel", "constant_speed")
_MEAS_VAR = 1.0
_M_PER_DEG = EARTH_RADIUS_M * math.pi / 180.0


def _transition(n_state: int, dt: float) -> np.ndarray:
    if n_state == 2:
        return np.array([[1.0, dt], [0.0, 1.0]])
    return np.array([[1.0, dt, 0.5 * dt * dt], [0.0, 1.0, dt], [0.0, 0.0, 1.0]])


def _filter_axis(zs: Sequence[float], F: np.ndarray) -> np.ndarray:
    """Final state after filtering one axis; measurement is position only.

    The first ``n_state`` reports pin the state down exactly, so the start
    is computed by inverting that linear map instead of approximating a
    diffuse prior with a huge covariance, which loses float precision in
    the covariance update.
    """
    n = F.shape[0]
    back = np.linalg.inv(F)
    m = np.vstack([np.linalg.matrix_power(back, n - 1 - k)[0] for k in range(n)])
    m_inv = np.linalg.inv(m)
    x = m_inv @ np.asarray(zs[:n], dtype=float)
    p = _MEAS_VAR * (m_inv @ m_inv.T)
    for z in zs[n:]:
        x = F @ x
        p = F @ p @ F.T
        gain = p[:, 0] / (p[0, 0] + _MEAS_VAR)
        x = x + gain * (z - x[0])
        p = p - np.outer(gain, p[0])
    return x


def kalman_baseline(
    observed: Sequence[GeoPoint],
    horizon: int,
    mode: str = "constant_speed",
    dt: float = STEP_S,
) -> list[GeoPoint]:
    """Filter the window per axis, then extrapolate ``horizon`` steps.

    ``constant_speed`` carries (position, velocity) per axis and
    ``linear_accel`` adds an acceleration state, matching level cruise
    and climbing or descending terminal traffic respectively.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
    if len(observed) < 3:
        raise ValueError(f"need at least 3 observed points to fit, got {len(observed)}")
    if horizon < 1:
        raise ValueError(f"horizon must be positive, got {horizon}")
    if dt <= 0.0:
        raise ValueError(f"step interval must be positive, got {dt}")
    ref = observed[0]
    cos0 = math.cos(math.radians(ref.lat))
    axes = [
        [(p.lat - ref.lat) * _M_PER_DEG for p in observed],
        [wrap_angle_deg(p.lon - ref.lon) * _M_PER_DEG * cos0 for p in observed],
        [p.alt - ref.alt for p in observed],
    ]
    F = _transition(3 if mode == "linear_accel" else 2, dt)
    states = [_filter_axis(zs, F) for zs in axes]
    out = []
    for _ in range(int(horizon)):
        states = [F @ x for x in states]
        lat = ref.lat + states[0][0] / _M_PER_DEG
        lon = normalize_lon(ref.lon + states[1][0] / (_M_PER_DEG * cos0))
        out.append(GeoPoint(lat=lat, lon=lon, alt=ref.alt + states[2][0]))
    return out


def naive_extrapolation(observed: Sequence[GeoPoint], horizon: int) -> list[GeoPoint]:
    """Repeat the last observed per-axis displacement; the no-filter comparator."""
    if len(observed) < 2:
        raise ValueError(f"need at least 2 observed points, got {len(observed)}")
    if horizon < 1:
        raise ValueError(f"horizon must be positive, got {horizon}")
    a, b = observed[-2], observed[-1]
    dlat = b.lat - a.lat
    dlon = wrap_angle_deg(b.lon - a.lon)
    dalt = b.alt - a.alt
    return [
        GeoPoint(b.lat + k * dlat, normalize_lon(b.lon + k * dlon), b.alt + k * dalt)
        for k in range(1, int(horizon) + 1)
    ]
