"""Unit tests for geodesy, envelope fitting, and constraint gating."""

import math
from dataclasses import dataclass

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from airtraj.constraints import (
    APPROACH,
    ENROUTE,
    TAKEOFF,
    CheckResult,
    ConstraintSet,
    ConstraintsUnavailableError,
    GeoPoint,
    check,
    destination_point,
    dist3d,
    fit_climb_descend,
    fit_rot,
    haversine,
    infer_step,
    initial_bearing,
    load_constraints,
    normalize_lon,
    save_constraints,
    wrap_angle_deg,
)
from airtraj.neuralcore import GaussianParams3, Tensor, gaussian3_sample

lat_st = st.floats(-85.0, 85.0)
lon_st = st.floats(-180.0, 179.999)


@dataclass
class Pt:
    """Minimal track point for fitting tests."""

    t: float
    lat: float
    lon: float
    alt: float
    gs_kt: float = 0.0
    heading_deg: float | None = None
    bank_deg: float | None = None


# ---------------------------------------------------------------------------
# geodesy


def test_geopoint_validation():
    with pytest.raises(ValueError):
        GeoPoint(91.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        GeoPoint(0.0, 180.0, 0.0)
    with pytest.raises(ValueError):
        GeoPoint(0.0, 0.0, math.inf)


def test_haversine_zero_and_symmetry():
    a = GeoPoint(28.43, -81.31, 0.0)
    b = GeoPoint(29.18, -81.06, 0.0)
    assert haversine(a, a) == 0.0
    assert haversine(a, b) == haversine(b, a)


def test_haversine_florida_pair():
    # independent geodesic calculators put this pair near 86.8 km
    a = GeoPoint(28.43, -81.31, 0.0)
    b = GeoPoint(29.18, -81.06, 0.0)
    assert haversine(a, b) == pytest.approx(86_800.0, abs=500.0)


def test_haversine_one_degree_latitude():
    # one degree of latitude on the sphere: r * pi / 180
    a = GeoPoint(10.0, 20.0, 0.0)
    b = GeoPoint(11.0, 20.0, 0.0)
    assert haversine(a, b) == pytest.approx(6_371_000.0 * math.pi / 180.0, rel=1e-12)


@given(lat_st, lon_st, lat_st, lon_st, lat_st, lon_st)
@settings(max_examples=80, deadline=None)
def test_haversine_triangle_inequality(lat1, lon1, lat2, lon2, lat3, lon3):
    a, b, c = GeoPoint(lat1, lon1, 0.0), GeoPoint(lat2, lon2, 0.0), GeoPoint(lat3, lon3, 0.0)
    assert haversine(a, c) <= haversine(a, b) + haversine(b, c) + 1e-6 * (1.0 + haversine(a, c))


def test_bearing_cardinal_directions():
    origin = GeoPoint(10.0, 20.0, 0.0)
    assert initial_bearing(origin, GeoPoint(11.0, 20.0, 0.0)) == pytest.approx(0.0, abs=1e-9)
    assert initial_bearing(origin, GeoPoint(9.0, 20.0, 0.0)) == pytest.approx(180.0, abs=1e-9)
    assert initial_bearing(origin, GeoPoint(10.0, 21.0, 0.0)) == pytest.approx(90.0, abs=0.2)
    assert initial_bearing(origin, origin) == 0.0


def test_destination_point_round_trip():
    origin = GeoPoint(35.0, -100.0, 1000.0)
    for bearing in (0.0, 45.0, 137.0, 270.0):
        dest = destination_point(origin, bearing, 25_000.0)
        assert haversine(origin, dest) == pytest.approx(25_000.0, rel=1e-9)
        assert initial_bearing(origin, dest) == pytest.approx(bearing, abs=1e-6)
        assert dest.alt == origin.alt


def test_wrap_angle():
    assert wrap_angle_deg(350.0) == pytest.approx(-10.0)
    assert wrap_angle_deg(-350.0) == pytest.approx(10.0)
    assert wrap_angle_deg(180.0) == pytest.approx(180.0)
    assert wrap_angle_deg(-180.0) == pytest.approx(180.0)
    assert wrap_angle_deg(720.0) == pytest.approx(0.0)


def test_normalize_lon():
    assert normalize_lon(180.0) == -180.0
    assert normalize_lon(185.0) == pytest.approx(-175.0)
    assert normalize_lon(-185.0) == pytest.approx(175.0)


def test_dist3d_combines_axes():
    a = GeoPoint(10.0, 20.0, 0.0)
    b = GeoPoint(10.0, 20.0, 300.0)
    assert dist3d(a, b) == pytest.approx(300.0)
    c = destination_point(a, 90.0, 400.0, alt=300.0)
    assert dist3d(a, c) == pytest.approx(500.0, rel=1e-9)


# ---------------------------------------------------------------------------
# constraint set and serialization


def test_constraint_set_validation():
    with pytest.raises(ValueError):
        ConstraintSet(theta_c=0.0, theta_d=10.0, omega_rot=3.0)
    with pytest.raises(ValueError):
        ConstraintSet(theta_c=10.0, theta_d=95.0, omega_rot=3.0)
    with pytest.raises(ValueError):
        ConstraintSet(theta_c=10.0, theta_d=10.0, omega_rot=0.0)
    with pytest.raises(ValueError):
        ConstraintSet(theta_c=10.0, theta_d=10.0, omega_rot=3.0, max_resample=0)


def test_constraints_file_round_trip(tmp_path):
    cs = ConstraintSet(theta_c=12.345678901234, theta_d=9.87, omega_rot=3.01, max_resample=64, fitted_from="unit")
    path = tmp_path / "limits.txt"
    save_constraints(str(path), cs)
    assert load_constraints(str(path)) == cs
    path.write_text("WRONG\n")
    with pytest.raises(ValueError):
        load_constraints(str(path))


# ---------------------------------------------------------------------------
# fitting


def _climb_flight(angle_deg, n=40, step_m=800.0, start=GeoPoint(30.0, -95.0, 0.0)):
    """Straight-track climb at a constant angle, 10 s per step."""
    slope = math.tan(math.radians(angle_deg))
    pts, pos = [], start
    for i in range(n):
        pts.append(Pt(t=10.0 * i, lat=pos.lat, lon=pos.lon, alt=pos.alt))
        pos = destination_point(pos, 40.0, step_m, alt=pos.alt + step_m * slope)
    return pts


def test_fit_climb_example_angle():
    # one climb: 3000 m altitude gain over 10 km ground distance
    start = GeoPoint(30.0, -95.0, 458.0)  # already above the 1500 ft floor
    pts = [Pt(0.0, start.lat, start.lon, start.alt)]
    pos = start
    for i in range(10):
        pos = destination_point(pos, 90.0, 1000.0, alt=pos.alt + 300.0)
        pts.append(Pt(10.0 * (i + 1), pos.lat, pos.lon, pos.alt))
    descent = [Pt(p.t, p.lat, p.lon, a.alt) for p, a in zip(pts, reversed(pts))]
    theta_c, theta_d = fit_climb_descend([(TAKEOFF, pts), (APPROACH, descent)])
    expected = math.degrees(math.atan(3000.0 / 10_000.0))
    assert theta_c == pytest.approx(expected, abs=0.02)
    assert theta_d == pytest.approx(expected, abs=0.02)
    assert expected == pytest.approx(16.70, abs=0.01)


def test_fit_takes_max_over_flights():
    f5 = _climb_flight(5.0)
    f12 = _climb_flight(12.0)
    d5 = [(APPROACH, list(reversed(f5)))]
    theta_c, _ = fit_climb_descend([(TAKEOFF, f5), (TAKEOFF, f12)] + d5)
    assert theta_c == pytest.approx(12.0, abs=0.1)


def test_fit_monotone_in_flights():
    base = [(TAKEOFF, _climb_flight(5.0)), (APPROACH, list(reversed(_climb_flight(6.0))))]
    theta_c0, theta_d0 = fit_climb_descend(base)
    theta_c1, theta_d1 = fit_climb_descend(base + [(TAKEOFF, _climb_flight(9.0))])
    assert theta_c1 >= theta_c0
    assert theta_d1 >= theta_d0


def test_fit_percentile_alternative():
    flights = [(TAKEOFF, _climb_flight(a)) for a in (5.0, 6.0, 7.0, 30.0)]
    flights.append((APPROACH, list(reversed(_climb_flight(6.0)))))
    theta_max, _ = fit_climb_descend(flights)
    theta_p, _ = fit_climb_descend(flights, aggregate="percentile", percentile=50.0)
    assert theta_max == pytest.approx(30.0, abs=0.2)
    assert theta_p < theta_max


def test_fit_requires_qualifying_flights():
    level = [Pt(10.0 * i, 30.0, -95.0 + 0.01 * i, 5000.0) for i in range(20)]
    with pytest.raises(ConstraintsUnavailableError):
        fit_climb_descend([(ENROUTE, level)])


def test_fit_rot_bank_formula():
    pts = [Pt(0.0, 30.0, -95.0, 1000.0, gs_kt=120.0, bank_deg=30.0)]
    expected = 1091.0 * math.tan(math.radians(30.0)) / 120.0
    assert fit_rot([pts]) == pytest.approx(expected)
    assert expected == pytest.approx(5.25, abs=0.01)


def test_fit_rot_zero_bank():
    pts = [
        Pt(0.0, 30.0, -95.0, 1000.0, gs_kt=120.0, bank_deg=0.0),
        Pt(10.0, 30.0, -95.0, 1000.0, gs_kt=120.0, bank_deg=0.0),
    ]
    assert fit_rot([pts]) == 0.0


def test_fit_rot_empirical_heading_rate():
    pts = [Pt(10.0 * i, 30.0, -95.0, 1000.0, heading_deg=(90.0 + 15.0 * i) % 360.0) for i in range(5)]
    assert fit_rot([pts]) == pytest.approx(1.5)


def test_fit_rot_straight_flight_near_zero():
    pts = [Pt(10.0 * i, 30.0 + 0.001 * i, -95.0, 1000.0, heading_deg=0.0) for i in range(10)]
    assert fit_rot([pts]) < 1e-6


def test_fit_rot_requires_heading_somewhere():
    pts = [Pt(10.0 * i, 30.0, -95.0, 1000.0) for i in range(5)]
    with pytest.raises(ConstraintsUnavailableError, match="constraints unavailable"):
        fit_rot([pts])


# ---------------------------------------------------------------------------
# check


CS = ConstraintSet(theta_c=15.0, theta_d=10.0, omega_rot=3.0)


def test_check_identical_point_passes():
    p = GeoPoint(30.0, -95.0, 1000.0)
    result = check(p, p, TAKEOFF, CS, dt=10.0)
    assert result.passed and result.score == 0.0


def test_check_enroute_always_passes():
    p = GeoPoint(30.0, -95.0, 10_000.0)
    cand = GeoPoint(30.0, -95.0, 20_000.0)  # absurd jump
    assert check(p, cand, ENROUTE, CS, dt=10.0).passed


def test_check_angle_violation():
    p = GeoPoint(30.0, -95.0, 1000.0)
    cand = destination_point(p, 0.0, 1000.0, alt=1000.0 + 1000.0 * math.tan(math.radians(20.0)))
    result = check(p, cand, TAKEOFF, CS, dt=10.0)
    assert not result.passed
    assert result.violations == ("angle",)
    assert result.angle_deg == pytest.approx(20.0, abs=0.05)


def test_check_limit_follows_motion_direction():
    # the binding limit is picked by climb vs descend, not by phase label
    p = GeoPoint(30.0, -95.0, 2000.0)
    drop = 1000.0 * math.tan(math.radians(12.0))
    down12 = destination_point(p, 0.0, 1000.0, alt=2000.0 - drop)
    up12 = destination_point(p, 0.0, 1000.0, alt=2000.0 + drop)
    assert not check(p, down12, APPROACH, CS, dt=10.0).passed  # 12 > theta_d=10
    assert not check(p, down12, TAKEOFF, CS, dt=10.0).passed
    assert check(p, up12, TAKEOFF, CS, dt=10.0).passed  # 12 < theta_c=15
    assert check(p, up12, APPROACH, CS, dt=10.0).passed


def test_check_turn_violation():
    p = GeoPoint(30.0, -95.0, 1000.0)
    cand = destination_point(p, 50.0, 1500.0)  # level, bearing 50
    result = check(p, cand, TAKEOFF, CS, dt=10.0, prev_heading=0.0)
    assert not result.passed
    assert result.violations == ("turn",)
    assert result.turn_rate_deg_s == pytest.approx(5.0, abs=0.01)


def test_check_vertical_jump():
    p = GeoPoint(30.0, -95.0, 1000.0)
    cand = GeoPoint(30.0, -95.0, 1200.0)
    result = check(p, cand, APPROACH, CS, dt=10.0)
    assert not result.passed
    assert result.violations == ("vertical jump",)
    assert result.score == math.inf


def test_check_rejects_bad_dt():
    p = GeoPoint(30.0, -95.0, 1000.0)
    with pytest.raises(ValueError):
        check(p, p, TAKEOFF, CS, dt=0.0)


# ---------------------------------------------------------------------------
# infer_step


def _dist(mu, sigma):
    return GaussianParams3(Tensor(mu), Tensor(sigma), Tensor([0.0, 0.0, 0.0]))


def test_infer_step_accepts_easy_distribution():
    prev = GeoPoint(30.0, -95.0, 1000.0)
    ahead = destination_point(prev, 0.0, 700.0)
    dist = _dist([ahead.lat, ahead.lon, ahead.alt], [1e-6, 1e-6, 1e-3])
    point, report = infer_step(dist, prev, TAKEOFF, CS, np.random.default_rng(0), prev_heading=0.0)
    assert report.accepted and not report.fallback and report.n_samples == 1
    assert haversine(prev, point) == pytest.approx(700.0, rel=1e-3)


def test_infer_step_fallback_matches_enumeration_oracle():
    prev = GeoPoint(30.0, -95.0, 1000.0)
    # mean climbs at ~45 degrees: hopeless under theta_c = 15
    ahead = destination_point(prev, 0.0, 500.0, alt=1500.0)
    dist = _dist([ahead.lat, ahead.lon, ahead.alt], [1e-4, 1e-4, 5.0])
    point, report = infer_step(dist, prev, TAKEOFF, CS, np.random.default_rng(7), prev_heading=0.0)
    assert report.fallback and not report.accepted
    assert report.n_samples == CS.max_resample

    # independent enumeration with the same seed
    rng = np.random.default_rng(7)
    best_score, best_point = math.inf, None
    for _ in range(CS.max_resample):
        s = gaussian3_sample(dist, rng)
        cand = GeoPoint(float(np.clip(s[0], -90, 90)), float(normalize_lon(s[1])), float(s[2]))
        r = check(prev, cand, TAKEOFF, CS, 10.0, prev_heading=0.0)
        assert not r.passed
        if r.score < best_score:
            best_score, best_point = r.score, cand
    assert point == best_point
    assert report.result.score == pytest.approx(best_score)


def test_infer_step_deterministic_per_seed():
    prev = GeoPoint(30.0, -95.0, 1000.0)
    ahead = destination_point(prev, 10.0, 600.0, alt=1050.0)
    dist = _dist([ahead.lat, ahead.lon, ahead.alt], [1e-3, 1e-3, 20.0])
    p1, _ = infer_step(dist, prev, TAKEOFF, CS, np.random.default_rng(3), prev_heading=10.0)
    p2, _ = infer_step(dist, prev, TAKEOFF, CS, np.random.default_rng(3), prev_heading=10.0)
    assert p1 == p2


def test_infer_step_without_constraints_takes_first_sample():
    prev = GeoPoint(30.0, -95.0, 1000.0)
    dist = _dist([60.0, 100.0, 90_000.0], [1e-6, 1e-6, 1e-6])
    point, report = infer_step(dist, prev, TAKEOFF, None, np.random.default_rng(0))
    assert report.accepted and report.n_samples == 1
    assert point.alt == pytest.approx(90_000.0, abs=1.0)
