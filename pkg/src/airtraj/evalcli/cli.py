"""Command-line surface tying the pipeline stages together.

One subcommand per stage: phase labeling, constraint fitting, synthetic
data generation, training for the terminal and en-route models,
prediction, evaluation, and GeoJSON export. Exit codes classify what
went wrong: 0 success, 2 usage, 3 missing input file, 4 invalid data or
configuration, 5 training divergence.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from typing import Mapping, Sequence

import numpy as np

from ..constraints import (
    PHASES,
    ConstraintSet,
    ConstraintsUnavailableError,
    fit_climb_descend,
    fit_rot,
    save_constraints,
)
from ..data import (
    EnrouteScenarioConfig,
    Flight,
    ScenarioConfig,
    gen_enroute_scenario,
    gen_phase_profile,
    gen_synthetic_scenarios,
    parse_tracks,
    resample_10s,
    write_tracks,
)
from ..enroute import (
    EnrouteTrainConfig,
    load_enroute,
    predict_enroute,
    save_enroute,
    train_enroute,
)
from ..phase_id import segment_flight
from ..stgraph import build_st_graph, flights_to_frames
from ..structural_model import TrainConfig, TrainingDiverged, save_structural, train
from .experiment import (
    CASES,
    ExperimentConfig,
    enroute_predictor,
    format_report_text,
    load_enroute_dataset,
    phase_windows,
    run_experiment,
    save_enroute_dataset,
    structural_predictor,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_MISSING_INPUT = 3
EXIT_BAD_DATA = 4
EXIT_DIVERGED = 5

STEP_S = 10.0


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    with open(path, encoding="utf-8") as f:
        loaded = json.load(f)
    if not isinstance(loaded, dict):
        raise ValueError(f"config must be a JSON object: {path}")
    return loaded


def _setting(args: argparse.Namespace, config: Mapping, name: str, default):
    """CLI flag beats config-file key beats built-in default."""
    value = getattr(args, name, None)
    if value is not None:
        return value
    if name in config:
        return config[name]
    return default


def _need_out(args: argparse.Namespace, config: Mapping) -> str:
    out = _setting(args, config, "out", None)
    if out is None:
        raise ValueError("this command writes files; pass --out <dir>")
    os.makedirs(out, exist_ok=True)
    return out


def _write_curve(path: str, names: tuple[str, str], curves: tuple) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(("epoch", *names))
        train_curve, val_curve = curves
        for i, value in enumerate(train_curve):
            row = [i, repr(value)]
            row.append(repr(val_curve[i]) if i < len(val_curve) else "")
            writer.writerow(row)


# ---------------------------------------------------------------------------
# Subcommands


def cmd_phase(args: argparse.Namespace, config: Mapping) -> int:
    flights, report = parse_tracks(args.tracks)
    print(f"{'flight':<12}{'phase':<10}{'start':>7}{'end':>7}{'points':>8}")
    rows = []
    for flight in flights:
        trips = [(p.alt_ft, p.gs_kt, p.vrate_fpm) for p in flight.points]
        segments, _ = segment_flight(trips)
        for seg in segments:
            print(f"{flight.flight_id:<12}{seg.phase:<10}{seg.start:>7}{seg.end:>7}{len(seg):>8}")
            rows.append((flight.flight_id, seg.phase, seg.start, seg.end))
    if report.rows_skipped:
        print(f"skipped {report.rows_skipped} rows: {report.skipped}")
    out = _setting(args, config, "out", None)
    if out is not None:
        os.makedirs(out, exist_ok=True)
        with open(os.path.join(out, "segments.csv"), "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(("flight_id", "phase", "start", "end"))
            writer.writerows(rows)
    return EXIT_OK


def cmd_fit_constraints(args: argparse.Namespace, config: Mapping) -> int:
    flights, _ = parse_tracks(args.tracks)
    labeled = []
    for flight in flights:
        trips = [(p.alt_ft, p.gs_kt, p.vrate_fpm) for p in flight.points]
        segments, _ = segment_flight(trips)
        for seg in segments:
            labeled.append((seg.phase, flight.points[seg.start : seg.end]))
    theta_c, theta_d = fit_climb_descend(labeled)
    omega = fit_rot([f.points for f in flights])
    limits = ConstraintSet(
        theta_c=theta_c, theta_d=theta_d, omega_rot=omega, fitted_from=args.tracks
    )
    print(f"theta_c={theta_c:.3f} deg  theta_d={theta_d:.3f} deg  omega_rot={omega:.3f} deg/s")
    out = _setting(args, config, "out", None)
    if out is not None:
        os.makedirs(out, exist_ok=True)
        save_constraints(os.path.join(out, "constraints.txt"), limits)
    return EXIT_OK


def cmd_gen_synthetic(args: argparse.Namespace, config: Mapping) -> int:
    out = _need_out(args, config)
    seed = int(_setting(args, config, "seed", 0))
    n = args.n
    if args.kind == "terminal":
        scenarios = gen_synthetic_scenarios(ScenarioConfig(seed=seed), n)
        flights = [f for sc in scenarios for f in sc.flights]
        write_tracks(os.path.join(out, "tracks.csv"), flights)
        with open(os.path.join(out, "labels.csv"), "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(("flight_id", "idx", "phase"))
            for sc in scenarios:
                for fid, phases in sorted(sc.true_phases.items()):
                    writer.writerows((fid, i, ph) for i, ph in enumerate(phases))
        print(f"wrote {len(flights)} flights over {n} scenarios to {out}")
    elif args.kind == "enroute":
        rng = np.random.default_rng(seed)
        cfg = EnrouteScenarioConfig(seed=seed)
        samples = [gen_enroute_scenario(cfg, rng, f"EN{i:04d}").sample for i in range(n)]
        save_enroute_dataset(out, samples)
        print(f"wrote {len(samples)} en-route samples to {out}")
    else:
        flights, labels = [], []
        for i in range(n):
            flight, truth = gen_phase_profile(t0=i * 86_400.0, flight_id=f"P{i}")
            flights.append(flight)
            labels.append((flight.flight_id, truth))
        write_tracks(os.path.join(out, "tracks.csv"), flights)
        with open(os.path.join(out, "labels.csv"), "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(("flight_id", "idx", "phase"))
            for fid, truth in labels:
                writer.writerows((fid, i, ph) for i, ph in enumerate(truth))
        print(f"wrote {len(flights)} profile flights to {out}")
    return EXIT_OK


def _day_graphs(flights: Sequence[Flight]):
    """One scene graph per day, flights aligned on the shared 10 s grid."""
    chunks: list[Flight] = []
    for flight in flights:
        pieces = resample_10s(flight)
        for j, piece in enumerate(pieces):
            if len(pieces) > 1:
                piece = Flight(f"{flight.flight_id}#{j}", piece.points)
            chunks.append(piece)
    by_day: dict[int, list[Flight]] = {}
    for flight in chunks:
        by_day.setdefault(flight.day, []).append(flight)
    graphs = []
    for day in sorted(by_day):
        group = by_day[day]
        t0 = min(f.points[0].t for f in group)
        t1 = max(f.points[-1].t for f in group)
        n = int(round((t1 - t0) / STEP_S)) + 1
        tracks = {}
        for flight in group:
            row: list = [None] * n
            for p in flight.points:
                row[int(round((p.t - t0) / STEP_S))] = p
            tracks[flight.flight_id] = row
        graphs.append(build_st_graph(flights_to_frames(tracks)))
    return graphs


def cmd_train_terminal(args: argparse.Namespace, config: Mapping) -> int:
    out = _need_out(args, config)
    flights, _ = parse_tracks(args.tracks)
    if not flights:
        raise ValueError(f"no flights in {args.tracks}")
    graphs = _day_graphs(flights)
    extra = {} if args.lr is None else {"lr": args.lr}
    cfg = TrainConfig(
        epochs=args.epochs,
        seed=int(_setting(args, config, "seed", 0)),
        t_obs=args.t_obs,
        d_h=args.d_h,
        d_embed=args.d_embed,
        variant=args.variant,
        **extra,
    )
    params, report = train(graphs, cfg)
    path = os.path.join(out, "structural.pckpt")
    save_structural(path, params, seed=cfg.seed)
    _write_curve(os.path.join(out, "curve.csv"), ("train_nll", "val_nll"), (report.train_nll, report.val_nll))
    print(f"trained on {len(graphs)} scenes for {cfg.epochs} epochs -> {path}")
    print(f"nll {report.train_nll[0]:.4f} -> {report.train_nll[-1]:.4f}")
    return EXIT_OK


def cmd_train_enroute(args: argparse.Namespace, config: Mapping) -> int:
    out = _need_out(args, config)
    samples = load_enroute_dataset(args.data)
    if args.holdout >= len(samples):
        raise ValueError(f"holdout {args.holdout} leaves no training samples of {len(samples)}")
    val = samples[len(samples) - args.holdout :] if args.holdout else []
    fit = samples[: len(samples) - args.holdout]
    extra = {} if args.lr is None else {"lr": args.lr}
    cfg = EnrouteTrainConfig(
        epochs=args.epochs,
        seed=int(_setting(args, config, "seed", 0)),
        d_h=args.d_h,
        d_e=args.d_e,
        cnn_dim=args.cnn_dim,
        plan_dim=args.plan_dim,
        loss_weights=tuple(args.loss_weights),
        input_noise=args.input_noise,
        **extra,
    )
    params, report = train_enroute(fit, cfg, val)
    path = os.path.join(out, "enroute.pckpt")
    save_enroute(path, params, seed=cfg.seed)
    _write_curve(os.path.join(out, "curve.csv"), ("train_loss", "val_loss"), (report.train_loss, report.val_loss))
    print(f"trained on {len(fit)} samples for {cfg.epochs} epochs -> {path}")
    print(f"loss {report.train_loss[0]:.4f} -> {report.train_loss[-1]:.4f}")
    return EXIT_OK


def _write_predictions(out: str, rows: list[tuple]) -> None:
    with open(os.path.join(out, "predictions.csv"), "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(("flight_id", "step", "lat", "lon", "alt_m"))
        for fid, step, p in rows:
            writer.writerow((fid, step, repr(p.lat), repr(p.lon), repr(p.alt)))


def cmd_predict(args: argparse.Namespace, config: Mapping) -> int:
    out = _need_out(args, config)
    horizon = args.horizon
    rows: list[tuple] = []
    if args.model_kind == "enroute" and os.path.isdir(args.data):
        params, _ = load_enroute(args.model)
        for sample in load_enroute_dataset(args.data):
            track = predict_enroute(sample, params, horizon)
            rows += [(sample.flight_id, k, p) for k, p in enumerate(track)]
    else:
        flights, _ = parse_tracks(args.data)
        pairs = phase_windows(flights, args.phase, args.t_obs, 0)
        if not pairs:
            raise ValueError(f"no {args.phase} windows of {args.t_obs} points in {args.data}")
        if args.model_kind == "enroute":
            predictor = enroute_predictor(args.model)
        else:
            predictor = structural_predictor(
                args.model, args.phase, int(_setting(args, config, "seed", 0))
            )
        for i, (observed, _) in enumerate(pairs):
            track = predictor(observed, horizon)
            rows += [(f"window{i}", k, p) for k, p in enumerate(track)]
    _write_predictions(out, rows)
    print(f"wrote {len(rows)} predicted points to {out}")
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace, config: Mapping) -> int:
    models = dict(config.get("model_paths", {}))
    for item in args.model or []:
        name, _, path = item.partition("=")
        if not path:
            raise ValueError(f"--model wants name=path, got {item!r}")
        models[name] = path
    cfg = ExperimentConfig(
        phase=_setting(args, config, "phase", None) or "enroute",
        case=_setting(args, config, "case", "C2"),
        t_obs=int(_setting(args, config, "t_obs", 18)),
        horizon=int(_setting(args, config, "horizon", 30)),
        seed=int(_setting(args, config, "seed", 0)),
        model_paths=tuple(sorted(models.items())),
        data_path=_setting(args, config, "data", None) or config.get("data_path"),
        out_dir=_setting(args, config, "out", None) or config.get("out_dir"),
    )
    reports = run_experiment(cfg)
    sys.stdout.write(format_report_text(cfg, reports))
    return EXIT_OK


def cmd_export_geojson(args: argparse.Namespace, config: Mapping) -> int:
    out = _need_out(args, config)
    flights, _ = parse_tracks(args.tracks)
    features = []
    for flight in flights:
        coords = [[p.lon, p.lat, p.alt] for p in flight.points]
        features.append(
            {
                "type": "Feature",
                "geometry": {"type": "LineString", "coordinates": coords},
                "properties": {"flight_id": flight.flight_id},
            }
        )
    path = os.path.join(out, "tracks.geojson")
    with open(path, "w", encoding="utf-8") as f:
        json.dump({"type": "FeatureCollection", "features": features}, f, sort_keys=True)
        f.write("\n")
    print(f"wrote {len(features)} features to {path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="airtraj",
        description="Flight phase labeling, trajectory model training, and evaluation.",
    )
    parser.add_argument("--config", help="JSON file of default option values")
    parser.add_argument("--seed", type=int, help="seed for any stochastic step")
    parser.add_argument("--out", help="directory for written artifacts")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phase", help="label flight phases in a track file")
    p.add_argument("tracks", help="track CSV")
    p.set_defaults(func=cmd_phase)

    p = sub.add_parser("fit-constraints", help="fit climb/descend/turn limits")
    p.add_argument("tracks", help="track CSV")
    p.set_defaults(func=cmd_fit_constraints)

    p = sub.add_parser("gen-synthetic", help="generate a synthetic dataset")
    p.add_argument("--kind", choices=("terminal", "enroute", "profile"), default="terminal")
    p.add_argument("--n", type=int, default=10, help="number of scenarios")
    p.add_argument("--aircraft", type=int, default=2, help="aircraft per terminal scenario")
    p.add_argument(
        "--arrival-fraction", type=float, default=1.0, help="arrivals share per terminal scenario"
    )
    p.add_argument(
        "--no-yield", action="store_true", help="terminal arrivals fly independent patterns"
    )
    p.set_defaults(func=cmd_gen_synthetic)

    p = sub.add_parser("train-terminal", help="train the structural scene model")
    p.add_argument("tracks", help="track CSV")
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--lr", type=float, help="Adam learning rate")
    p.add_argument("--t-obs", type=int, default=18)
    p.add_argument("--d-h", type=int, default=32)
    p.add_argument("--d-embed", type=int, default=24)
    p.add_argument("--variant", choices=("attention", "mean_pool"), default="attention")
    p.set_defaults(func=cmd_train_terminal)

    p = sub.add_parser("train-enroute", help="train the dual-attention forecaster")
    p.add_argument("data", help="dataset directory from gen-synthetic --kind enroute")
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--lr", type=float, help="Adam learning rate")
    p.add_argument("--d-h", type=int, default=24)
    p.add_argument("--d-e", type=int, default=12)
    p.add_argument("--cnn-dim", type=int, default=12)
    p.add_argument("--plan-dim", type=int, default=8)
    p.add_argument("--holdout", type=int, default=0, help="samples held out for the val curve")
    p.add_argument("--input-noise", type=float, default=0.25)
    p.add_argument(
        "--loss-weights",
        type=float,
        nargs=3,
        default=(1.0, 1.0, 1.0),
        metavar=("W_V", "W_THETA", "W_D"),
    )
    p.set_defaults(func=cmd_train_enroute)

    p = sub.add_parser("predict", help="roll a trained model forward")
    p.add_argument("data", help="track CSV or en-route dataset directory")
    p.add_argument("--model", required=True, help="checkpoint path")
    p.add_argument("--model-kind", choices=("terminal", "enroute"), required=True)
    p.add_argument("--phase", choices=PHASES, default="enroute")
    p.add_argument("--t-obs", type=int, default=18)
    p.add_argument("--horizon", type=int, default=30)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="score models plus the Kalman baseline")
    p.add_argument("--phase", choices=PHASES)
    p.add_argument("--case", choices=CASES)
    p.add_argument("--t-obs", type=int, dest="t_obs")
    p.add_argument("--horizon", type=int)
    p.add_argument("--data", help="track CSV")
    p.add_argument(
        "--model", action="append", metavar="NAME=PATH", help="checkpoint to score (repeatable)"
    )
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("export-geojson", help="dump tracks as GeoJSON LineStrings")
    p.add_argument("tracks", help="track CSV")
    p.set_defaults(func=cmd_export_geojson)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = _load_config(args.config)
        return args.func(args, config)
    except FileNotFoundError as exc:
        print(f"error[missing-input]: {exc}", file=sys.stderr)
        return EXIT_MISSING_INPUT
    except TrainingDiverged as exc:
        print(f"error[training-diverged]: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (ValueError, ConstraintsUnavailableError) as exc:
        print(f"error[bad-data]: {exc}", file=sys.stderr)
        return EXIT_BAD_DATA


if __name__ == "__main__":
    sys.exit(main())
