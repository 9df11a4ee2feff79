"""Synthetic traffic generators.

Three families:

- terminal scenarios: arrivals descending a shared final-approach corridor
  with yield behavior (the trailing aircraft levels off and slows when the
  projected 3-D separation would drop below the trigger); with yield off,
  independent pattern arrivals that turn onto final at an exact rate and
  descend at an exact glideslope; departures climb straight at an exact
  configured angle;
- a climb-cruise-descend profile with per-point regime labels for
  validating the fuzzy phase identifier;
- en-route cruise samples that deviate laterally around a strong-updraft
  blob embedded in an otherwise smooth weather grid.

All randomness flows through one seeded generator, so a config reproduces
its scenarios bit-for-bit. Scenario k is stamped onto calendar day k so
day-based splits keep scenarios atomic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..constraints import (
    APPROACH,
    ENROUTE,
    TAKEOFF,
    GeoPoint,
    destination_point,
    dist3d,
)
from ..enroute.sample import EnrouteSample
from ..enroute.weather import WeatherGrid, synth_weather_grid
from .ingest import FT_TO_M, KT_TO_MPS, MPS_TO_KT, SECONDS_PER_DAY, STEP_S, Flight, TrackPoint

# Yield-logic margins over the separation floor (m).
YIELD_TRIGGER_MARGIN_M = 600.0
YIELD_RESUME_MARGIN_M = 800.0
YIELD_SLOWDOWN_MPS = 4.0
MIN_YIELD_SPEED_MPS = 30.0

# Arrival draw ranges: distance to threshold, speed, in-trail spacing.
LEADER_DIST_RANGE_M = (45_000.0, 55_000.0)
TRAIL_GAP_RANGE_M = (6_500.0, 10_000.0)
LEADER_SPEED_RANGE_MPS = (62.0, 80.0)
OVERTAKE_RANGE_MPS = (6.0, 18.0)

DEPARTURE_GROUND_SPEED_MPS = 85.0
DEPARTURE_TOP_STEPS = 16
DEPARTURE_START_ALT_M = 30.0


@dataclass(frozen=True)
class ScenarioConfig:
    """Knobs for the terminal-area generator."""

    n_aircraft: int = 2
    airport: GeoPoint = field(default_factory=lambda: GeoPoint(40.0, -74.0, 0.0))
    runway_heading_deg: float = 90.0
    arrival_fraction: float = 1.0
    yield_enabled: bool = True
    noise_sigma_m: float = 0.0
    seed: int = 0
    n_steps: int = 52
    climb_angle_deg: float = 12.0
    turn_rate_deg_s: float = 3.0
    turn_total_deg: float = 90.0
    glideslope_deg_range: tuple[float, float] = (2.6, 3.4)
    separation_floor_m: float = 5500.0
    randomize_bearing: bool = True

    def __post_init__(self):
        if self.n_aircraft < 1:
            raise ValueError(f"n_aircraft must be >= 1, got {self.n_aircraft}")
        if not 0.0 <= self.arrival_fraction <= 1.0:
            raise ValueError(f"arrival_fraction must be in [0, 1], got {self.arrival_fraction}")
        if self.noise_sigma_m < 0.0:
            raise ValueError(f"noise sigma must be >= 0, got {self.noise_sigma_m}")
        if self.n_steps < 2:
            raise ValueError(f"n_steps must be >= 2, got {self.n_steps}")
        if not 0.0 < self.climb_angle_deg < 90.0:
            raise ValueError(f"climb angle must be in (0, 90), got {self.climb_angle_deg}")
        lo, hi = self.glideslope_deg_range
        if not 0.0 < lo <= hi < 90.0:
            raise ValueError(f"bad glideslope range {self.glideslope_deg_range}")
        if self.turn_rate_deg_s <= 0.0 or self.turn_total_deg <= 0.0:
            raise ValueError("turn rate and total turn must be positive")
        per_step = self.turn_rate_deg_s * STEP_S
        if abs(self.turn_total_deg / per_step - round(self.turn_total_deg / per_step)) > 1e-9:
            raise ValueError(
                f"turn_total_deg ({self.turn_total_deg}) must be a whole number of "
                f"{per_step} deg steps so the turn rate is held exactly"
            )


@dataclass
class Scenario:
    """Flights plus the per-point phase labels the generator intended."""

    flights: list[Flight]
    true_phases: dict[str, tuple[str, ...]]
    config: ScenarioConfig
    day: int


def _vrate_fpm(dalt_m: float) -> float:
    return dalt_m / FT_TO_M * (60.0 / STEP_S)


def _emit(
    fid: str,
    t0: float,
    positions: list[GeoPoint],
    speeds_mps: list[float],
    headings: list[float],
    rng: np.random.Generator,
    sigma_m: float,
) -> Flight:
    """Build a flight from true states; noise perturbs positions only."""
    pts = []
    n = len(positions)
    for k, pos in enumerate(positions):
        nxt = positions[k + 1] if k + 1 < n else positions[k]
        prv = positions[k - 1] if k else positions[0]
        dalt = (nxt.alt - pos.alt) if k + 1 < n else (pos.alt - prv.alt)
        lat, lon, alt = pos.lat, pos.lon, pos.alt
        if sigma_m > 0.0:
            dx, dy = rng.normal(0.0, sigma_m, size=2)
            jittered = destination_point(pos, math.degrees(math.atan2(dx, dy)) % 360.0, math.hypot(dx, dy))
            lat, lon = jittered.lat, jittered.lon
            alt = max(0.0, alt + rng.normal(0.0, 0.5 * sigma_m))
        pts.append(
            TrackPoint(
                t=t0 + k * STEP_S,
                lat=lat,
                lon=lon,
                alt_ft=alt / FT_TO_M,
                gs_kt=speeds_mps[k] * MPS_TO_KT,
                vrate_fpm=_vrate_fpm(dalt),
                heading_deg=headings[k] % 360.0,
            )
        )
    return Flight(flight_id=fid, points=pts)


def _sim_arrivals(cfg: ScenarioConfig, rng: np.random.Generator, course: float, n_arr: int):
    """March arrivals down one corridor; trailers yield on projected conflict.

    Returns per-aircraft (positions, speeds, headings, labels). One
    glideslope is shared scenario-wide, and descents run parallel to it
    after a level-off, so no step ever descends steeper than the slope a
    clean leader flight exhibits.
    """
    dt = STEP_S
    back = (course + 180.0) % 360.0
    slope = math.tan(math.radians(rng.uniform(*cfg.glideslope_deg_range)))
    trigger = cfg.separation_floor_m + YIELD_TRIGGER_MARGIN_M
    resume = trigger + YIELD_RESUME_MARGIN_M

    dist, speed, filed = [], [], []
    for i in range(n_arr):
        if i == 0:
            dist.append(rng.uniform(*LEADER_DIST_RANGE_M))
            filed.append(rng.uniform(*LEADER_SPEED_RANGE_MPS))
        else:
            dist.append(dist[-1] + rng.uniform(*TRAIL_GAP_RANGE_M))
            filed.append(filed[-1] + rng.uniform(*OVERTAKE_RANGE_MPS))
        speed.append(filed[i])
    alt = [d * slope for d in dist]
    yielding = [False] * n_arr
    landed = [False] * n_arr

    def pos_of(d: float, a: float) -> GeoPoint:
        return destination_point(cfg.airport, back, d, alt=a)

    positions = [[pos_of(dist[i], alt[i])] for i in range(n_arr)]
    step_speeds: list[list[float]] = [[] for _ in range(n_arr)]
    for _ in range(cfg.n_steps - 1):
        new_dist, new_alt = list(dist), list(alt)
        for i in range(n_arr):
            if landed[i]:
                speed[i] = max(8.0, speed[i] * 0.75)
                new_dist[i] = dist[i] - speed[i] * dt
                new_alt[i] = 0.0
                step_speeds[i].append(speed[i])
                continue
            if i > 0 and cfg.yield_enabled:
                if yielding[i]:
                    sep_now = dist3d(pos_of(dist[i], alt[i]), pos_of(dist[i - 1], alt[i - 1]))
                    if landed[i - 1] or sep_now >= resume:
                        yielding[i] = False
                        speed[i] = filed[i]
                if not yielding[i] and not landed[i - 1]:
                    projected = pos_of(dist[i] - speed[i] * dt, max(alt[i] - speed[i] * dt * slope, 0.0))
                    ahead_next = pos_of(new_dist[i - 1], new_alt[i - 1])
                    if dist3d(projected, ahead_next) < trigger:
                        yielding[i] = True
                        speed[i] = max(MIN_YIELD_SPEED_MPS, speed[i - 1] - YIELD_SLOWDOWN_MPS)
            new_dist[i] = dist[i] - speed[i] * dt
            if yielding[i]:
                new_alt[i] = alt[i]  # level off
            else:
                new_alt[i] = max(alt[i] - speed[i] * dt * slope, 0.0)
                if new_alt[i] == 0.0:
                    landed[i] = True
            step_speeds[i].append(speed[i])
        dist, alt = new_dist, new_alt
        for i in range(n_arr):
            positions[i].append(pos_of(dist[i], alt[i]))
    labels = tuple([APPROACH] * cfg.n_steps)
    out = []
    for i in range(n_arr):
        spd = step_speeds[i] + [step_speeds[i][-1]]
        out.append((positions[i], spd, [course] * cfg.n_steps, labels))
    return out


def _sim_departure(cfg: ScenarioConfig, bearing: float, start_offset_m: float):
    """Straight departure: climb at exactly the configured angle to the top
    of climb, then level cruise. Heading is constant throughout."""
    dt = STEP_S
    g = DEPARTURE_GROUND_SPEED_MPS * dt  # ground run per step, m
    rise = g * math.tan(math.radians(cfg.climb_angle_deg))
    pos = destination_point(cfg.airport, bearing, start_offset_m, alt=DEPARTURE_START_ALT_M)
    positions, labels = [pos], []
    climbing_left = DEPARTURE_TOP_STEPS
    for _ in range(cfg.n_steps - 1):
        if climbing_left > 0:
            labels.append(TAKEOFF)
            pos = destination_point(pos, bearing, g, alt=pos.alt + rise)
            climbing_left -= 1
        else:
            labels.append(ENROUTE)
            pos = destination_point(pos, bearing, g)
        positions.append(pos)
    labels.append(labels[-1])
    n = cfg.n_steps
    return positions, [DEPARTURE_GROUND_SPEED_MPS] * n, [bearing] * n, tuple(labels)


PATTERN_SPEED_MPS = 100.0
PATTERN_CRUISE_STEPS = 4
PATTERN_START_ALT_M = 2000.0


def _sim_pattern_arrival(cfg: ScenarioConfig, rng: np.random.Generator, bearing: float, start: GeoPoint):
    """Independent arrival: level cruise, one level turn onto final at
    exactly the configured rate, then a straight descent at an exact
    glideslope angle until touchdown."""
    dt = STEP_S
    g = PATTERN_SPEED_MPS * dt
    slope = math.tan(math.radians(rng.uniform(*cfg.glideslope_deg_range)))
    turn_steps = int(round(cfg.turn_total_deg / (cfg.turn_rate_deg_s * dt)))
    pos = GeoPoint(start.lat, start.lon, PATTERN_START_ALT_M)
    heading = bearing
    positions, speeds, headings = [pos], [PATTERN_SPEED_MPS], [heading]
    speed = PATTERN_SPEED_MPS
    cruise_left, turn_left = PATTERN_CRUISE_STEPS, turn_steps
    for _ in range(cfg.n_steps - 1):
        if cruise_left > 0:
            pos = destination_point(pos, heading, speed * dt)
            cruise_left -= 1
        elif turn_left > 0:
            mid = heading + 0.5 * cfg.turn_rate_deg_s * dt
            heading = (heading + cfg.turn_rate_deg_s * dt) % 360.0
            pos = destination_point(pos, mid, speed * dt)
            turn_left -= 1
        elif pos.alt > 0.0:
            new_alt = max(pos.alt - speed * dt * slope, 0.0)
            pos = destination_point(pos, heading, speed * dt, alt=new_alt)
        else:
            speed = max(8.0, speed * 0.75)
            pos = destination_point(pos, heading, speed * dt, alt=0.0)
        positions.append(pos)
        speeds.append(speed)
        headings.append(heading)
    return positions, speeds, headings, tuple([APPROACH] * cfg.n_steps)


def gen_synthetic_scenarios(cfg: ScenarioConfig, n_scenarios: int = 1) -> list[Scenario]:
    """Simulate seeded terminal scenarios; scenario k lives on day k."""
    rng = np.random.default_rng(cfg.seed)
    n_arr = int(round(cfg.n_aircraft * cfg.arrival_fraction))
    n_dep = cfg.n_aircraft - n_arr
    scenarios = []
    for day in range(n_scenarios):
        t0 = day * SECONDS_PER_DAY
        course = rng.uniform(0.0, 360.0) if cfg.randomize_bearing else cfg.runway_heading_deg
        flights, phases = [], {}
        if n_arr and cfg.yield_enabled:
            arrivals = _sim_arrivals(cfg, rng, course, n_arr)
        elif n_arr:
            arrivals = []
            for i in range(n_arr):
                bearing = (course + 40.0 * i) % 360.0
                start = destination_point(cfg.airport, (bearing + 180.0) % 360.0, 30_000.0 + 8_000.0 * i)
                arrivals.append(_sim_pattern_arrival(cfg, rng, bearing, start))
        else:
            arrivals = []
        for i, (p, v, h, lab) in enumerate(arrivals):
            fid = f"S{day}A{i}"
            flights.append(_emit(fid, t0, p, v, h, rng, cfg.noise_sigma_m))
            phases[fid] = lab
        for j in range(n_dep):
            bearing = (course + 90.0 + 25.0 * j) % 360.0
            p, v, h, lab = _sim_departure(cfg, bearing, start_offset_m=6000.0 * j)
            fid = f"S{day}D{j}"
            flights.append(_emit(fid, t0, p, v, h, rng, cfg.noise_sigma_m))
            phases[fid] = lab
        scenarios.append(Scenario(flights=flights, true_phases=phases, config=cfg, day=day))
    return scenarios


# ---------------------------------------------------------------------------
# phase-identification profile


def gen_phase_profile(
    origin: GeoPoint = GeoPoint(39.0, -77.0, 0.0),
    bearing_deg: float = 60.0,
    t0: float = 0.0,
    flight_id: str = "P0",
) -> tuple[Flight, tuple[str, ...]]:
    """Climb-cruise-descend profile with membership-unambiguous regimes.

    Climb 2,000 -> 35,000 ft at +2,000 ft/min and 260 kt, cruise 120 steps
    at 500 kt, descend to 2,000 ft at -1,800 ft/min and 250 kt. Labels
    follow the forward-looking vertical rate each emitted point carries.
    """
    climb_step_ft = 2000.0 * STEP_S / 60.0
    descend_step_ft = 1800.0 * STEP_S / 60.0
    alts, speeds = [], []
    n_climb = int(round(33_000.0 / climb_step_ft))
    for k in range(n_climb):
        alts.append(2000.0 + k * climb_step_ft)
        speeds.append(260.0)
    n_cruise = 120
    for _ in range(n_cruise):
        alts.append(35_000.0)
        speeds.append(500.0)
    n_desc = int(round(33_000.0 / descend_step_ft)) + 1
    for k in range(1, n_desc + 1):
        alts.append(35_000.0 - k * descend_step_ft)
        speeds.append(250.0)

    pts, labels = [], []
    pos = origin
    n = len(alts)
    for k in range(n):
        dalt_ft = (alts[k + 1] - alts[k]) if k + 1 < n else (alts[k] - alts[k - 1])
        vrate = dalt_ft * 60.0 / STEP_S
        pts.append(
            TrackPoint(
                t=t0 + k * STEP_S,
                lat=pos.lat,
                lon=pos.lon,
                alt_ft=alts[k],
                gs_kt=speeds[k],
                vrate_fpm=vrate,
                heading_deg=bearing_deg,
            )
        )
        labels.append(TAKEOFF if vrate > 0.0 else APPROACH if vrate < 0.0 else ENROUTE)
        pos = destination_point(pos, bearing_deg, speeds[k] * KT_TO_MPS * STEP_S)
    return Flight(flight_id=flight_id, points=pts), tuple(labels)


# ---------------------------------------------------------------------------
# en-route samples with weather-coupled deviations


@dataclass(frozen=True)
class EnrouteScenarioConfig:
    """Knobs for the en-route generator (route runs due east)."""

    t_obs: int = 18
    horizon: int = 30
    speed_mps: float = 230.0
    level_ft: float = 35_000.0
    base_lat: float = 40.0
    base_lon: float = -100.0
    grid_nx: int = 24
    grid_ny: int = 24
    blob_amp_range: tuple[float, float] = (1.0, 3.0)
    blob_along_range_m: tuple[float, float] = (66_000.0, 92_000.0)
    blob_width_range_m: tuple[float, float] = (5_000.0, 8_000.0)
    blob_lateral_range_m: tuple[float, float] = (5_000.0, 10_000.0)
    offset_per_amp_m: float = 1400.0
    seed: int = 0

    def __post_init__(self):
        if self.t_obs < 2 or self.horizon < 1:
            raise ValueError(f"bad window: t_obs={self.t_obs}, horizon={self.horizon}")
        if self.speed_mps <= 0.0:
            raise ValueError(f"speed must be positive, got {self.speed_mps}")


@dataclass(frozen=True)
class EnrouteScenario:
    """One generated sample plus the blob ground truth behind it."""

    sample: EnrouteSample
    blob_lat: float
    blob_lon: float
    blob_along_m: float
    blob_width_m: float
    blob_amplitude: float
    deviation_side: float  # +1 deviates left of course (north), -1 right
    peak_offset_m: float


ROUTE_BEARING_DEG = 90.0
PLAN_POINTS = 10


def gen_enroute_scenario(
    cfg: EnrouteScenarioConfig,
    rng: np.random.Generator,
    flight_id: str = "E0",
) -> EnrouteScenario:
    """One cruise flight deviating laterally around a strong-VVEL blob.

    The blob sits beyond the observed window and is laterally displaced to
    one side of the route; the flight bends to the other side with a peak
    offset proportional to the blob amplitude. The observed portion is
    straight, so the deviation is predictable only from the weather grid.
    """
    dt = STEP_S
    n_total = cfg.t_obs + cfg.horizon
    start = GeoPoint(
        cfg.base_lat + rng.uniform(-0.15, 0.15),
        cfg.base_lon + rng.uniform(-0.15, 0.15),
        cfg.level_ft * FT_TO_M,
    )
    amp = rng.uniform(*cfg.blob_amp_range)
    s_blob = rng.uniform(*cfg.blob_along_range_m)
    width = rng.uniform(*cfg.blob_width_range_m)
    lateral = rng.uniform(*cfg.blob_lateral_range_m)
    side = float(rng.choice((-1.0, 1.0)))
    peak = cfg.offset_per_amp_m * amp

    def nominal(s: float) -> GeoPoint:
        return destination_point(start, ROUTE_BEARING_DEG, s)

    # Baseline-subtracted bump: exactly zero up to the end of the observed
    # window, so the deviation is predictable only from the weather grid.
    s_obs_end = (cfg.t_obs - 1) * cfg.speed_mps * dt
    tail0 = math.exp(-0.5 * ((s_obs_end - s_blob) / width) ** 2)

    def flown(s: float) -> GeoPoint:
        raw = math.exp(-0.5 * ((s - s_blob) / width) ** 2)
        off = peak * max(0.0, raw - tail0) / (1.0 - tail0)
        p = nominal(s)
        if off < 1e-9:
            return p
        return destination_point(p, (ROUTE_BEARING_DEG - 90.0 * side) % 360.0, off)

    track = [flown(k * cfg.speed_mps * dt) for k in range(n_total)]
    observed = tuple(track[: cfg.t_obs])
    target = tuple(track[cfg.t_obs:])

    total_s = (n_total - 1) * cfg.speed_mps * dt
    plan = tuple(nominal(j * total_s / (PLAN_POINTS - 1)) for j in range(PLAN_POINTS))

    blob_center = destination_point(
        nominal(s_blob), (ROUTE_BEARING_DEG + 90.0 * side) % 360.0, lateral
    )
    grid = _route_frame_grid(cfg, start, total_s, blob_center, width, amp, rng)
    sample = EnrouteSample(
        flight_id=flight_id,
        observed=observed,
        plan=plan,
        plan_present=True,
        weather=(grid,) * cfg.t_obs,
        target=target,
    )
    return EnrouteScenario(
        sample=sample,
        blob_lat=blob_center.lat,
        blob_lon=blob_center.lon,
        blob_along_m=s_blob,
        blob_width_m=width,
        blob_amplitude=amp,
        deviation_side=side,
        peak_offset_m=peak,
    )


def _route_frame_grid(
    cfg: EnrouteScenarioConfig,
    start: GeoPoint,
    total_s: float,
    blob_center: GeoPoint,
    width: float,
    amp: float,
    rng: np.random.Generator,
) -> WeatherGrid:
    """Grid covering the route corridor: along-track with margin, +-33 km laterally."""
    m_per_deg_lat = 111_320.0
    m_per_deg_lon = m_per_deg_lat * math.cos(math.radians(start.lat))
    lon0 = start.lon - 10_000.0 / m_per_deg_lon
    lon1 = start.lon + (total_s + 14_000.0) / m_per_deg_lon
    lat0 = start.lat - 33_000.0 / m_per_deg_lat
    lat1 = start.lat + 33_000.0 / m_per_deg_lat
    return synth_weather_grid(
        rng,
        lat0=lat0,
        lon0=lon0,
        lat1=lat1,
        lon1=lon1,
        nx=cfg.grid_nx,
        ny=cfg.grid_ny,
        level_ft=cfg.level_ft,
        vvel_blob=(blob_center.lat, blob_center.lon, width, amp),
    )
