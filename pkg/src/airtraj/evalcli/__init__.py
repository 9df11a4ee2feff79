"""Metrics, Kalman baselines, experiment runs, and the command line."""

from .experiment import (
    CASES,
    ExperimentConfig,
    format_report_csv,
    format_report_text,
    load_enroute_dataset,
    missing_inputs,
    phase_windows,
    run_experiment,
    save_enroute_dataset,
)
from .kalman import MODES, kalman_baseline, naive_extrapolation
from .metrics import MetricsReport, ade, fde, mae_components, summarize

__all__ = [
    "CASES",
    "MODES",
    "ExperimentConfig",
    "MetricsReport",
    "ade",
    "fde",
    "format_report_csv",
    "format_report_text",
    "kalman_baseline",
    "load_enroute_dataset",
    "mae_components",
    "missing_inputs",
    "naive_extrapolation",
    "phase_windows",
    "run_experiment",
    "save_enroute_dataset",
    "summarize",
]
