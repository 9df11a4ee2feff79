"""Single-level weather grids: 7 named channels on a lat/lon box.

File format (round-trips byte-exactly): the magic line ``WXG1``, one text
header line ``nx ny level lat0 lon0 lat1 lon1 channel-names`` (names
comma-joined), then the raw payload as little-endian float32 in
channel-major row-major order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..constraints import EARTH_RADIUS_M

CHANNELS = ("HGT", "TMP", "RH", "VVEL", "UGRD", "VGRD", "ABSV")
MAGIC = b"WXG1\n"
MIN_DIM = 3

# Plausible (base, ripple amplitude) per channel for synthetic fields.
_CHANNEL_SCALES = {
    "HGT": (10000.0, 60.0),
    "TMP": (220.0, 4.0),
    "RH": (45.0, 25.0),
    "VVEL": (0.0, 0.08),
    "UGRD": (12.0, 9.0),
    "VGRD": (0.0, 9.0),
    "ABSV": (1e-4, 4e-5),
}


@dataclass(frozen=True)
class WeatherGrid:
    """7-channel field at one flight level over a lat/lon bounding box.

    ``values`` has shape (7, ny, nx); row index runs lat0 -> lat1 and
    column index lon0 -> lon1. Stored as float32 so that a loaded grid
    re-saves to identical bytes.
    """

    lat0: float
    lon0: float
    lat1: float
    lon1: float
    level_ft: float
    values: np.ndarray

    def __post_init__(self):
        vals = np.ascontiguousarray(self.values, dtype=np.float32)
        if vals.ndim != 3 or vals.shape[0] != len(CHANNELS):
            raise ValueError(f"values must be ({len(CHANNELS)}, ny, nx), got {vals.shape}")
        if vals.shape[1] < MIN_DIM or vals.shape[2] < MIN_DIM:
            raise ValueError(f"grid dims must be at least {MIN_DIM}x{MIN_DIM}, got {vals.shape[1:]}")
        if not np.isfinite(vals).all():
            raise ValueError("weather grid contains non-finite values")
        object.__setattr__(self, "values", vals)

    @property
    def nx(self) -> int:
        return self.values.shape[2]

    @property
    def ny(self) -> int:
        return self.values.shape[1]

    def channel(self, name: str) -> np.ndarray:
        return self.values[CHANNELS.index(name)]

    def lat_axis(self) -> np.ndarray:
        return np.linspace(self.lat0, self.lat1, self.ny)

    def lon_axis(self) -> np.ndarray:
        return np.linspace(self.lon0, self.lon1, self.nx)


def standardize_grid(grid: WeatherGrid) -> np.ndarray:
    """Grid values rescaled to O(1) per channel, as float64 (7, ny, nx).

    Raw channels span wildly different units (geopotential meters vs
    vorticity in 1/s); each is shifted and divided by a fixed per-channel
    constant so a learned encoder sees comparable magnitudes.
    """
    out = np.asarray(grid.values, dtype=np.float64).copy()
    for i, name in enumerate(CHANNELS):
        base, amp = _CHANNEL_SCALES[name]
        out[i] = (out[i] - base) / amp
    return out


def _fmt(x: float) -> str:
    return repr(float(x))


def save_weather_grid(path: str, grid: WeatherGrid) -> None:
    header = " ".join(
        [
            str(grid.nx),
            str(grid.ny),
            _fmt(grid.level_ft),
            _fmt(grid.lat0),
            _fmt(grid.lon0),
            _fmt(grid.lat1),
            _fmt(grid.lon1),
            ",".join(CHANNELS),
        ]
    )
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(header.encode("ascii") + b"\n")
        f.write(grid.values.astype("<f4").tobytes(order="C"))


def load_weather_grid(path: str) -> WeatherGrid:
    with open(path, "rb") as f:
        blob = f.read()
    if not blob.startswith(MAGIC):
        raise ValueError(f"not a weather grid file (bad magic): {path}")
    nl = blob.index(b"\n", len(MAGIC))
    fields = blob[len(MAGIC):nl].decode("ascii").split(" ")
    if len(fields) != 8:
        raise ValueError(f"malformed weather grid header: {path}")
    nx, ny = int(fields[0]), int(fields[1])
    level, lat0, lon0, lat1, lon1 = (float(v) for v in fields[2:7])
    names = tuple(fields[7].split(","))
    if names != CHANNELS:
        raise ValueError(f"unexpected channel names {names} in {path}")
    payload = blob[nl + 1:]
    expected = len(CHANNELS) * ny * nx * 4
    if len(payload) != expected:
        raise ValueError(f"weather payload is {len(payload)} bytes, expected {expected}: {path}")
    values = np.frombuffer(payload, dtype="<f4").reshape(len(CHANNELS), ny, nx)
    return WeatherGrid(lat0=lat0, lon0=lon0, lat1=lat1, lon1=lon1, level_ft=level, values=values)


def _grid_mesh(lat0, lon0, lat1, lon1, nx, ny):
    lats = np.linspace(lat0, lat1, ny)
    lons = np.linspace(lon0, lon1, nx)
    return np.meshgrid(lons, lats)  # (ny, nx) each, lon first


def _haversine_field(lat_c, lon_c, lon_mesh, lat_mesh):
    """Vectorized great-circle distance (m) from one point to every cell."""
    p1 = np.radians(lat_mesh)
    p2 = math.radians(lat_c)
    dp = np.radians(lat_c - lat_mesh)
    dl = np.radians(lon_c - lon_mesh)
    a = np.sin(dp / 2.0) ** 2 + np.cos(p1) * math.cos(p2) * np.sin(dl / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_M * np.arcsin(np.sqrt(np.clip(a, 0.0, 1.0)))


def synth_weather_grid(
    rng: np.random.Generator,
    lat0: float,
    lon0: float,
    lat1: float,
    lon1: float,
    nx: int = 24,
    ny: int = 24,
    level_ft: float = 35000.0,
    vvel_blob: tuple[float, float, float, float] | None = None,
) -> WeatherGrid:
    """Seeded smooth fields: per channel a base value plus a short sum of
    random sinusoids. ``vvel_blob=(lat, lon, radius_m, amplitude)`` adds a
    Gaussian updraft bump to the VVEL channel.
    """
    xs = np.linspace(0.0, 1.0, nx)
    ys = np.linspace(0.0, 1.0, ny)
    gx, gy = np.meshgrid(xs, ys)
    planes = []
    for name in CHANNELS:
        base, amp = _CHANNEL_SCALES[name]
        plane = np.full((ny, nx), base)
        for _ in range(3):
            fx, fy = rng.uniform(0.5, 3.0, size=2)
            px, py = rng.uniform(0.0, 2.0 * np.pi, size=2)
            weight = rng.uniform(0.3, 1.0)
            plane = plane + amp * weight * np.sin(2.0 * np.pi * fx * gx + px) * np.cos(
                2.0 * np.pi * fy * gy + py
            )
        if name == "RH":
            plane = np.clip(plane, 0.0, 100.0)
        planes.append(plane)
    values = np.stack(planes)
    if vvel_blob is not None:
        blat, blon, radius_m, amplitude = vvel_blob
        if radius_m <= 0.0:
            raise ValueError(f"blob radius must be positive, got {radius_m}")
        lon_mesh, lat_mesh = _grid_mesh(lat0, lon0, lat1, lon1, nx, ny)
        dist = _haversine_field(blat, blon, lon_mesh, lat_mesh)
        values[CHANNELS.index("VVEL")] += amplitude * np.exp(-0.5 * (dist / radius_m) ** 2)
    return WeatherGrid(lat0=lat0, lon0=lon0, lat1=lat1, lon1=lon1, level_ft=level_ft, values=values)
