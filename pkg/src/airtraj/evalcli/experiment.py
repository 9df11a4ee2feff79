"""Experiment orchestration: run predictors over a corpus, write reports.

A predictor is any callable (observed points, horizon) -> predicted
points; checkpoint-backed models and the Kalman baseline are adapted to
that shape so one loop scores them all. Reports are written both as an
aligned text table and as CSV, with deterministic formatting so a fixed
config and seed reproduce identical bytes.
"""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from ..constraints import APPROACH, ENROUTE, PHASES, TAKEOFF, GeoPoint
from ..data.ingest import FT_TO_M, Flight, parse_tracks
from ..enroute import (
    PLAN_LENGTH,
    EnrouteSample,
    WeatherGrid,
    load_enroute,
    load_weather_grid,
    predict_enroute,
    save_weather_grid,
)
from ..phase_id import segment_flight
from ..stgraph import build_st_graph, flights_to_frames
from ..structural_model import load_structural, rollout
from .kalman import kalman_baseline
from .metrics import MetricsReport, summarize

__all__ = [
    "CASES",
    "ExperimentConfig",
    "Predictor",
    "format_report_csv",
    "format_report_text",
    "load_enroute_dataset",
    "missing_inputs",
    "phase_windows",
    "run_experiment",
    "save_enroute_dataset",
]

CASES = ("C1", "C2")
TrajectoryPair = tuple[Sequence[GeoPoint], Sequence[GeoPoint]]
Predictor = Callable[[Sequence[GeoPoint], int], Sequence[GeoPoint]]

REPORT_TEXT = "report.txt"
REPORT_CSV = "report.csv"
_CSV_COLUMNS = ("model", "ade_m", "fde_m", "mae_lat_deg", "mae_lon_deg", "mae_alt_m", "n_trajectories", "horizon")


@dataclass(frozen=True)
class ExperimentConfig:
    """One evaluation run: which phase, which inputs, which checkpoints.

    ``case`` labels the input regime of the checkpoints under test (C1:
    waypoints only; C2: waypoints plus plan and weather); it is recorded
    in the report header. ``model_paths`` maps a display name to a
    checkpoint file.
    """

    phase: str
    case: str = "C2"
    t_obs: int = 18
    horizon: int = 30
    seed: int = 0
    model_paths: tuple[tuple[str, str], ...] = ()
    data_path: str | None = None
    out_dir: str | None = None

    def __post_init__(self):
        if self.phase not in PHASES:
            raise ValueError(f"unknown phase {self.phase!r}; expected one of {PHASES}")
        if self.case not in CASES:
            raise ValueError(f"unknown case {self.case!r}; expected one of {CASES}")
        if self.t_obs < 1:
            raise ValueError(f"t_obs must be at least 1, got {self.t_obs}")
        if self.horizon < 1:
            raise ValueError(f"horizon must be positive, got {self.horizon}")
        object.__setattr__(self, "model_paths", tuple((str(n), str(p)) for n, p in self.model_paths))


def missing_inputs(cfg: ExperimentConfig) -> list[str]:
    """Every configured path that does not resolve, in one pass."""
    paths = [] if cfg.data_path is None else [cfg.data_path]
    paths += [p for _, p in cfg.model_paths]
    return [p for p in paths if not os.path.exists(p)]


def phase_windows(
    flights: Sequence[Flight], phase: str, t_obs: int, horizon: int
) -> list[TrajectoryPair]:
    """(observed, truth) windows from the start of each matching segment."""
    pairs: list[TrajectoryPair] = []
    for flight in flights:
        trips = [(p.alt_ft, p.gs_kt, p.vrate_fpm) for p in flight.points]
        segments, _ = segment_flight(trips)
        for seg in segments:
            if seg.phase != phase or len(seg) < t_obs + horizon:
                continue
            window = flight.points[seg.start : seg.start + t_obs + horizon]
            pairs.append(
                (
                    tuple(p.point() for p in window[:t_obs]),
                    tuple(p.point() for p in window[t_obs:]),
                )
            )
    return pairs


# ---------------------------------------------------------------------------
# Checkpoint adapters


def structural_predictor(path: str, phase: str, seed: int = 0) -> Predictor:
    """Mean-rollout adapter for a structural checkpoint on one flight."""
    params, _ = load_structural(path)

    def predict(observed: Sequence[GeoPoint], horizon: int) -> list[GeoPoint]:
        frames = flights_to_frames({"ego": list(observed)})
        graph = build_st_graph(frames)
        rng = np.random.default_rng(seed)
        pred = rollout(graph, params, horizon, rng, phases=phase, sigma_scale=0.0)
        return pred.sampled_track("ego")

    return predict


def enroute_predictor(path: str) -> Predictor:
    """Adapter for an en-route checkpoint fed bare waypoint windows.

    Without a weather or plan source the sample is filled with a zero
    grid and an absent plan, i.e. the C1 input regime.
    """
    params, _ = load_enroute(path)
    ny, nx = params.conv.ny, params.conv.nx
    zero_plan = (GeoPoint(0.0, 0.0, 0.0),) * PLAN_LENGTH

    def predict(observed: Sequence[GeoPoint], horizon: int) -> list[GeoPoint]:
        obs = tuple(observed)
        lats = [p.lat for p in obs]
        lons = [p.lon for p in obs]
        grid = WeatherGrid(
            lat0=min(lats) - 0.5,
            lon0=min(lons) - 0.5,
            lat1=max(lats) + 0.5,
            lon1=max(lons) + 0.5,
            level_ft=float(np.median([p.alt for p in obs]) / FT_TO_M),
            values=np.zeros((7, ny, nx), dtype=np.float32),
        )
        sample = EnrouteSample(
            flight_id="eval",
            observed=obs,
            plan=zero_plan,
            plan_present=False,
            weather=(grid,) * len(obs),
        )
        return predict_enroute(sample, params, horizon)

    return predict


def _baseline(phase: str) -> tuple[str, Predictor]:
    mode = "constant_speed" if phase == ENROUTE else "linear_accel"

    def predict(observed: Sequence[GeoPoint], horizon: int) -> list[GeoPoint]:
        return kalman_baseline(observed, horizon, mode)

    return f"kf_{mode}", predict


def _checkpoint_predictors(cfg: ExperimentConfig) -> dict[str, Predictor]:
    out: dict[str, Predictor] = {}
    for name, path in cfg.model_paths:
        if cfg.phase in (TAKEOFF, APPROACH):
            out[name] = structural_predictor(path, cfg.phase, cfg.seed)
        else:
            out[name] = enroute_predictor(path)
    return out


# ---------------------------------------------------------------------------
# Reports


def format_report_text(cfg: ExperimentConfig, reports: Mapping[str, MetricsReport]) -> str:
    """Aligned table, models sorted by name; header records the config."""
    lines = [
        f"phase={cfg.phase} case={cfg.case} t_obs={cfg.t_obs} "
        f"horizon={cfg.horizon} seed={cfg.seed}"
    ]
    names = sorted(reports)
    width = max(len("model"), *(len(n) for n in names))
    header = f"{'model':<{width}}" + "".join(f"{c:>14}" for c in _CSV_COLUMNS[1:])
    lines.append(header)
    for name in names:
        r = reports[name]
        cells = (r.ade, r.fde, r.mae_lat, r.mae_lon, r.mae_alt)
        row = f"{name:<{width}}" + "".join(f"{v:>14.6f}" for v in cells)
        row += f"{r.n_trajectories:>14d}{r.horizon:>14d}"
        lines.append(row)
    return "\n".join(lines) + "\n"


def format_report_csv(reports: Mapping[str, MetricsReport]) -> str:
    """Machine-readable twin of the text table, full float precision."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(_CSV_COLUMNS)
    for name in sorted(reports):
        r = reports[name]
        writer.writerow(
            [
                name,
                repr(r.ade),
                repr(r.fde),
                repr(r.mae_lat),
                repr(r.mae_lon),
                repr(r.mae_alt),
                r.n_trajectories,
                r.horizon,
            ]
        )
    return buf.getvalue()


def run_experiment(
    cfg: ExperimentConfig,
    predictors: Mapping[str, Predictor] | None = None,
    trajectories: Sequence[TrajectoryPair] | None = None,
) -> dict[str, MetricsReport]:
    """Score every predictor plus the phase's Kalman baseline.

    ``predictors`` and ``trajectories`` default to checkpoint adapters
    from cfg.model_paths and phase-filtered windows from cfg.data_path;
    passing them directly supports models whose inputs are richer than
    bare waypoints. Reports land in cfg.out_dir when set.
    """
    missing = missing_inputs(cfg)
    if missing:
        raise FileNotFoundError("missing inputs: " + ", ".join(sorted(missing)))
    if trajectories is None:
        if cfg.data_path is None:
            raise ValueError("no trajectories given and no data_path configured")
        flights, _ = parse_tracks(cfg.data_path)
        trajectories = phase_windows(flights, cfg.phase, cfg.t_obs, cfg.horizon)
    if not trajectories:
        raise ValueError(f"no {cfg.phase} windows of {cfg.t_obs}+{cfg.horizon} points to evaluate")
    if predictors is None:
        predictors = _checkpoint_predictors(cfg)
    models = dict(predictors)
    base_name, base_fn = _baseline(cfg.phase)
    models.setdefault(base_name, base_fn)

    reports: dict[str, MetricsReport] = {}
    for name in sorted(models):
        pairs = []
        for observed, truth in trajectories:
            pred = models[name](observed, cfg.horizon)
            if len(pred) != cfg.horizon:
                raise ValueError(
                    f"predictor {name!r} returned {len(pred)} points for horizon {cfg.horizon}"
                )
            pairs.append((tuple(pred), tuple(truth)[: cfg.horizon]))
        reports[name] = summarize(pairs)

    if cfg.out_dir is not None:
        os.makedirs(cfg.out_dir, exist_ok=True)
        with open(os.path.join(cfg.out_dir, REPORT_TEXT), "w", encoding="utf-8") as f:
            f.write(format_report_text(cfg, reports))
        with open(os.path.join(cfg.out_dir, REPORT_CSV), "w", encoding="utf-8") as f:
            f.write(format_report_csv(reports))
    return reports


# ---------------------------------------------------------------------------
# En-route dataset artifacts


def save_enroute_dataset(dir_path: str, samples: Sequence[EnrouteSample]) -> None:
    """Write samples as points.csv + plans.csv + one WXG1 grid per sample.

    Floats are written with repr so a round trip is exact. Every sample
    must share one grid object across its observed steps (true of the
    synthetic generator); per-step weather sequences are out of scope.
    """
    os.makedirs(dir_path, exist_ok=True)
    wx_dir = os.path.join(dir_path, "weather")
    os.makedirs(wx_dir, exist_ok=True)
    with (
        open(os.path.join(dir_path, "points.csv"), "w", newline="", encoding="utf-8") as pf,
        open(os.path.join(dir_path, "plans.csv"), "w", newline="", encoding="utf-8") as lf,
    ):
        points = csv.writer(pf)
        points.writerow(("flight_id", "kind", "idx", "lat", "lon", "alt_m"))
        plans = csv.writer(lf)
        plans.writerow(("flight_id", "idx", "lat", "lon", "alt_m"))
        for s in samples:
            if len({id(g) for g in s.weather}) != 1:
                raise ValueError(
                    f"sample {s.flight_id!r} mixes weather grids; the dataset "
                    "format stores one grid per sample"
                )
            save_weather_grid(os.path.join(wx_dir, f"{s.flight_id}.wxg"), s.weather[0])
            for kind, pts in (("obs", s.observed), ("target", s.target)):
                for i, p in enumerate(pts):
                    points.writerow((s.flight_id, kind, i, repr(p.lat), repr(p.lon), repr(p.alt)))
            if s.plan_present:
                for i, p in enumerate(s.plan):
                    plans.writerow((s.flight_id, i, repr(p.lat), repr(p.lon), repr(p.alt)))


def load_enroute_dataset(dir_path: str) -> list[EnrouteSample]:
    """Inverse of save_enroute_dataset, samples sorted by flight id."""
    points_path = os.path.join(dir_path, "points.csv")
    plans_path = os.path.join(dir_path, "plans.csv")
    missing = [p for p in (points_path, plans_path) if not os.path.exists(p)]
    if missing:
        raise FileNotFoundError("missing inputs: " + ", ".join(sorted(missing)))
    tracks: dict[str, dict[str, list[tuple[int, GeoPoint]]]] = {}
    with open(points_path, newline="", encoding="utf-8") as f:
        for row in csv.DictReader(f):
            fid = row["flight_id"]
            point = GeoPoint(float(row["lat"]), float(row["lon"]), float(row["alt_m"]))
            tracks.setdefault(fid, {"obs": [], "target": []})[row["kind"]].append(
                (int(row["idx"]), point)
            )
    plans: dict[str, list[tuple[int, GeoPoint]]] = {}
    with open(plans_path, newline="", encoding="utf-8") as f:
        for row in csv.DictReader(f):
            point = GeoPoint(float(row["lat"]), float(row["lon"]), float(row["alt_m"]))
            plans.setdefault(row["flight_id"], []).append((int(row["idx"]), point))

    def ordered(rows: list[tuple[int, GeoPoint]]) -> tuple[GeoPoint, ...]:
        return tuple(p for _, p in sorted(rows, key=lambda r: r[0]))

    samples = []
    for fid in sorted(tracks):
        grid = load_weather_grid(os.path.join(dir_path, "weather", f"{fid}.wxg"))
        observed = ordered(tracks[fid]["obs"])
        plan_rows = plans.get(fid)
        samples.append(
            EnrouteSample(
                flight_id=fid,
                observed=observed,
                plan=ordered(plan_rows) if plan_rows else (GeoPoint(0.0, 0.0, 0.0),) * PLAN_LENGTH,
                plan_present=plan_rows is not None,
                weather=(grid,) * len(observed),
                target=ordered(tracks[fid]["target"]),
            )
        )
    return samples
