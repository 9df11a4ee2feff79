"""Fuzzy flight-phase identification from altitude, speed, and climb rate.

Each track point gets a degree per rule (Mamdani min/max combination):

    takeoff  = min(H_lo, V_mid, RoC_pos)
    enroute  = min(H_hi, V_hi, RoC_zero)
    approach = min(H_lo, V_mid, max(RoC_neg, RoC_zero))

with Gaussian and S/Z-shaped membership functions over altitude (ft),
ground speed (kt), and vertical rate (ft/min). Per-point labels are then
run-length merged, absorbing short runs into their longer neighbor.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

from .constraints import APPROACH, ENROUTE, TAKEOFF

log = logging.getLogger(__name__)

DEFAULT_MIN_RUN = 6  # points; 1 minute at 10 s steps

# Rough plausibility envelope for ft/kt/fpm inputs; values outside hint at
# a unit mix-up (e.g. meters fed where feet are expected).
_ALT_FT_RANGE = (-1500.0, 70000.0)
_SPEED_KT_RANGE = (0.0, 1000.0)
_ROC_FPM_RANGE = (-15000.0, 15000.0)


def gaussian_mf(x: float, mu: float, sigma: float) -> float:
    """exp(-(x - mu)^2 / (2 sigma^2)); peak 1 at mu."""
    if sigma <= 0.0:
        raise ValueError(f"sigma must be positive: {sigma}")
    z = (x - mu) / sigma
    return math.exp(-0.5 * z * z)


def s_mf(x: float, a: float, b: float) -> float:
    """Piecewise-quadratic ramp: 0 below a, 1 above b, smooth between."""
    if a >= b:
        raise ValueError(f"s_mf requires a < b, got a={a}, b={b}")
    if x <= a:
        return 0.0
    if x >= b:
        return 1.0
    if x <= (a + b) / 2.0:
        t = (x - a) / (b - a)
        return 2.0 * t * t
    t = (x - b) / (b - a)
    return 1.0 - 2.0 * t * t


def z_mf(x: float, a: float, b: float) -> float:
    """Mirror of s_mf: 1 below a, 0 above b."""
    return 1.0 - s_mf(x, a, b)


@dataclass(frozen=True)
class MembershipFn:
    """One membership function: gaussian(mu, sigma) or s/z-shaped(a, b)."""

    kind: str  # "gaussian" | "s" | "z"
    p1: float
    p2: float

    def __post_init__(self):
        if self.kind not in ("gaussian", "s", "z"):
            raise ValueError(f"unknown membership kind {self.kind!r}")
        if self.kind == "gaussian" and self.p2 <= 0.0:
            raise ValueError("gaussian membership needs sigma > 0")
        if self.kind in ("s", "z") and self.p1 >= self.p2:
            raise ValueError("s/z membership needs a < b")

    def __call__(self, x: float) -> float:
        if self.kind == "gaussian":
            return gaussian_mf(x, self.p1, self.p2)
        if self.kind == "s":
            return s_mf(x, self.p1, self.p2)
        return z_mf(x, self.p1, self.p2)


@dataclass(frozen=True)
class FuzzyParams:
    """Membership set for commercial flights; inputs in ft, kt, ft/min."""

    h_lo: MembershipFn = MembershipFn("gaussian", 10_000.0, 10_000.0)
    h_hi: MembershipFn = MembershipFn("gaussian", 35_000.0, 20_000.0)
    v_mid: MembershipFn = MembershipFn("gaussian", 300.0, 100.0)
    v_hi: MembershipFn = MembershipFn("gaussian", 600.0, 100.0)
    roc_zero: MembershipFn = MembershipFn("gaussian", 0.0, 100.0)
    roc_pos: MembershipFn = MembershipFn("s", 10.0, 1000.0)
    roc_neg: MembershipFn = MembershipFn("z", -1000.0, -10.0)


DEFAULT_FUZZY = FuzzyParams()

# Fixed tie order: takeoff beats enroute beats approach.
PHASE_ORDER = (TAKEOFF, ENROUTE, APPROACH)


@dataclass(frozen=True)
class PhaseLabel:
    """Classification of one point: winning phase plus all rule degrees."""

    phase: str
    activation: float
    degrees: tuple[float, float, float]  # (takeoff, enroute, approach)


def classify_point(
    alt_ft: float,
    speed_kt: float,
    roc_fpm: float,
    params: FuzzyParams = DEFAULT_FUZZY,
) -> PhaseLabel:
    """Classify one sample; inputs must be in ft / kt / ft-per-min."""
    if not (math.isfinite(alt_ft) and math.isfinite(speed_kt) and math.isfinite(roc_fpm)):
        raise ValueError("classify_point inputs must be finite")
    if not _ALT_FT_RANGE[0] <= alt_ft <= _ALT_FT_RANGE[1]:
        log.warning("altitude %.1f outside plausible ft range; check units", alt_ft)
    if not _SPEED_KT_RANGE[0] <= speed_kt <= _SPEED_KT_RANGE[1]:
        log.warning("speed %.1f outside plausible kt range; check units", speed_kt)
    if not _ROC_FPM_RANGE[0] <= roc_fpm <= _ROC_FPM_RANGE[1]:
        log.warning("vertical rate %.1f outside plausible fpm range; check units", roc_fpm)

    h_lo = params.h_lo(alt_ft)
    d_takeoff = min(h_lo, params.v_mid(speed_kt), params.roc_pos(roc_fpm))
    d_enroute = min(params.h_hi(alt_ft), params.v_hi(speed_kt), params.roc_zero(roc_fpm))
    d_approach = min(h_lo, params.v_mid(speed_kt), max(params.roc_neg(roc_fpm), params.roc_zero(roc_fpm)))
    degrees = (d_takeoff, d_enroute, d_approach)
    best = 0
    for k in (1, 2):
        if degrees[k] > degrees[best]:
            best = k
    return PhaseLabel(PHASE_ORDER[best], degrees[best], degrees)


@dataclass(frozen=True)
class PhaseSegment:
    """A maximal run of one phase over point indices [start, end)."""

    phase: str
    start: int
    end: int

    def __len__(self) -> int:
        return self.end - self.start


def _runs(labels: Sequence[str]) -> list[list]:
    runs: list[list] = []
    for i, lab in enumerate(labels):
        if runs and runs[-1][0] == lab:
            runs[-1][2] = i + 1
        else:
            runs.append([lab, i, i + 1])
    return runs


def segment_flight(
    samples: Sequence[tuple[float, float, float]],
    params: FuzzyParams = DEFAULT_FUZZY,
    min_run: int = DEFAULT_MIN_RUN,
) -> tuple[list[PhaseSegment], list[PhaseLabel]]:
    """Segment a time-ordered flight into phase runs.

    ``samples`` are (alt_ft, speed_kt, roc_fpm) triples. Runs shorter than
    ``min_run`` are absorbed into the longer adjacent run (the earlier one
    on ties) until every run qualifies or one run remains. Returns the
    segments and the raw per-point labels.
    """
    if not samples:
        raise ValueError("segment_flight needs at least one point")
    labels = [classify_point(a, v, r, params) for a, v, r in samples]
    runs = _runs([lab.phase for lab in labels])

    while len(runs) > 1:
        lengths = [r[2] - r[1] for r in runs]
        short = None
        for i, n in enumerate(lengths):
            if n < min_run and (short is None or n < lengths[short]):
                short = i
        if short is None:
            break
        left = lengths[short - 1] if short > 0 else -1
        right = lengths[short + 1] if short + 1 < len(runs) else -1
        target = short - 1 if left >= right else short + 1
        runs[short][0] = runs[target][0]
        merged = []
        for run in runs:
            if merged and merged[-1][0] == run[0]:
                merged[-1][2] = run[2]
            else:
                merged.append(run)
        runs = merged

    segments = [PhaseSegment(phase, start, end) for phase, start, end in runs]
    return segments, labels
