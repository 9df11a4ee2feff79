"""Tests for the en-route dual-attention forecaster.

Weather encoding is checked against a scripted convolution oracle and a
receptive-field argument; attention stages against closed-form softmax
cases; kinematics and the loss against hand-sized geodesic cases; the
full gradient against central finite differences; and training and
prediction against determinism, progress, and baseline-comparison
oracles.
"""

import dataclasses
import math

import numpy as np
import pytest

from airtraj.constraints import GeoPoint, destination_point, dist3d
from airtraj.enroute import (
    CHANNELS,
    ConvStackParams,
    DualAttnParams,
    EnrouteSample,
    EnrouteTrainConfig,
    KinematicTriple,
    WeatherGrid,
    derive_kinematics,
    encode_weather,
    evaluate_enroute,
    fit_enroute_normalizer,
    input_attention,
    load_enroute,
    load_weather_grid,
    lva_loss,
    predict_enroute,
    save_enroute,
    save_weather_grid,
    standardize_grid,
    synth_weather_grid,
    teacher_forced_loss,
    temporal_attention,
    train_enroute,
)
from airtraj.enroute.weather import _CHANNEL_SCALES
from airtraj.neuralcore import finite_diff_gradcheck
from airtraj.neuralcore.checkpoint import save_checkpoint
from airtraj.neuralcore.tensor import Tensor
from airtraj.structural_model import TrainingDiverged

M_PER_DEG = 111_320.0


def make_grid(rng, ny=16, nx=16, lat0=39.5, lon0=-101.0, lat1=40.5, lon1=-99.0):
    values = rng.normal(0.0, 1.0, (len(CHANNELS), ny, nx))
    return WeatherGrid(lat0=lat0, lon0=lon0, lat1=lat1, lon1=lon1, level_ft=35000.0, values=values)


def straight_sample(rng, fid="F0", t_obs=6, horizon=4, sigma=0.0, heading=None,
                    lat0=40.0, lon0=-100.0, ny=16, nx=16, speed=None):
    """Constant-speed great-circle track split into observed/target halves."""
    brg = rng.uniform(60.0, 120.0) if heading is None else heading
    spd = rng.uniform(200.0, 250.0) if speed is None else speed
    start = GeoPoint(lat0 + rng.uniform(-0.3, 0.3), lon0 + rng.uniform(-0.3, 0.3),
                     10668.0 + rng.uniform(-300.0, 300.0))
    n = t_obs + horizon
    pts = [destination_point(start, brg, k * spd * 10.0) for k in range(n)]
    if sigma > 0.0:
        jit = []
        for p in pts:
            dlat = rng.normal(0.0, sigma) / M_PER_DEG
            dlon = rng.normal(0.0, sigma) / (M_PER_DEG * math.cos(math.radians(p.lat)))
            jit.append(GeoPoint(p.lat + dlat, p.lon + dlon, p.alt + rng.normal(0.0, 10.0)))
        pts = jit
    total = (n - 1) * spd * 10.0
    plan = tuple(destination_point(start, brg, j * total / 9.0) for j in range(10))
    grid = synth_weather_grid(rng, lat0=start.lat - 0.6, lon0=start.lon - 0.8,
                              lat1=start.lat + 0.6, lon1=start.lon + 0.8,
                              nx=nx, ny=ny, level_ft=35000.0)
    return EnrouteSample(fid, tuple(pts[:t_obs]), plan, True, (grid,) * t_obs, tuple(pts[t_obs:]))


def small_params(samples, seed=0, d_h=6, d_e=4, cnn_channels=(2, 2, 2), cnn_dim=3, plan_dim=3):
    rng = np.random.default_rng(seed)
    g = samples[0].weather[0]
    return DualAttnParams.init(rng, fit_enroute_normalizer(samples), g.ny, g.nx,
                               d_h=d_h, d_e=d_e, cnn_channels=cnn_channels,
                               cnn_dim=cnn_dim, plan_dim=plan_dim)


def cv_extrapolate(observed, horizon):
    """Constant-velocity baseline: repeat the last observed displacement."""
    a, b = observed[-2], observed[-1]
    dlat, dlon, dalt = b.lat - a.lat, b.lon - a.lon, b.alt - a.alt
    return [GeoPoint(b.lat + k * dlat, b.lon + k * dlon, b.alt + k * dalt)
            for k in range(1, horizon + 1)]


def ade(pred, truth):
    return float(np.mean([dist3d(p, t) for p, t in zip(pred, truth)]))


# ---------------------------------------------------------------------------
# weather grid file format


class TestWeatherFile:
    def test_round_trip_byte_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        grid = make_grid(rng, ny=5, nx=7, lat0=10.25, lon0=-99.5, lat1=11.0, lon1=-97.75)
        p1, p2 = tmp_path / "a.wxg", tmp_path / "b.wxg"
        save_weather_grid(p1, grid)
        loaded = load_weather_grid(p1)
        assert (loaded.lat0, loaded.lon0, loaded.lat1, loaded.lon1) == (10.25, -99.5, 11.0, -97.75)
        assert loaded.level_ft == grid.level_ft
        assert np.array_equal(loaded.values, grid.values)
        save_weather_grid(p2, loaded)
        assert p1.read_bytes() == p2.read_bytes()

    def test_header_layout(self, tmp_path):
        rng = np.random.default_rng(1)
        grid = make_grid(rng, ny=4, nx=3)
        path = tmp_path / "g.wxg"
        save_weather_grid(path, grid)
        blob = path.read_bytes()
        assert blob.startswith(b"WXG1\n")
        header = blob[5:blob.index(b"\n", 5)].decode("ascii").split(" ")
        assert header[0] == "3" and header[1] == "4"
        assert header[7] == ",".join(CHANNELS)
        payload = blob[blob.index(b"\n", 5) + 1:]
        assert len(payload) == len(CHANNELS) * 4 * 3 * 4

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "bad.wxg"
        path.write_bytes(b"NOPE\nwhatever")
        with pytest.raises(ValueError, match="magic"):
            load_weather_grid(path)

    def test_truncated_payload_rejected(self, tmp_path):
        rng = np.random.default_rng(2)
        path = tmp_path / "t.wxg"
        save_weather_grid(path, make_grid(rng, ny=4, nx=4))
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(ValueError, match="payload"):
            load_weather_grid(path)

    def test_grid_validation(self):
        with pytest.raises(ValueError, match="values must be"):
            WeatherGrid(0.0, 0.0, 1.0, 1.0, 35000.0, np.zeros((3, 4, 4)))
        bad = np.zeros((len(CHANNELS), 4, 4))
        bad[2, 1, 1] = np.nan
        with pytest.raises(ValueError, match="non-finite"):
            WeatherGrid(0.0, 0.0, 1.0, 1.0, 35000.0, bad)

    def test_standardize_grid_scales_channels(self):
        rng = np.random.default_rng(3)
        grid = make_grid(rng, ny=4, nx=4)
        out = standardize_grid(grid)
        assert out.dtype == np.float64 and out.shape == grid.values.shape
        for i, name in enumerate(CHANNELS):
            base, amp = _CHANNEL_SCALES[name]
            assert np.allclose(out[i], (grid.values[i].astype(np.float64) - base) / amp)

    def test_synth_grid_blob_raises_vvel(self):
        rng = np.random.default_rng(4)
        kw = dict(lat0=39.0, lon0=-101.0, lat1=41.0, lon1=-99.0, nx=12, ny=12)
        flat = synth_weather_grid(np.random.default_rng(4), **kw)
        bumped = synth_weather_grid(np.random.default_rng(4), **kw,
                                    vvel_blob=(40.0, -100.0, 30000.0, 2.0))
        diff = bumped.channel("VVEL") - flat.channel("VVEL")
        assert diff.max() > 0.1
        others = [c for c in CHANNELS if c != "VVEL"]
        for name in others:
            assert np.array_equal(bumped.channel(name), flat.channel(name))


# ---------------------------------------------------------------------------
# weather encoder


def _oracle_conv_stack(values, cnn):
    """Loop-nest re-derivation of the strided conv stack plus dense readout."""
    x = np.asarray(values, dtype=np.float64)
    for kernels, bias in cnn.layers:
        K, b = kernels.values, bias.values
        o, c, kh, kw = K.shape
        hy = (x.shape[1] - kh) // 2 + 1
        hx = (x.shape[2] - kw) // 2 + 1
        out = np.zeros((o, hy, hx))
        for oc in range(o):
            for iy in range(hy):
                for ix in range(hx):
                    patch = x[:, 2 * iy : 2 * iy + kh, 2 * ix : 2 * ix + kw]
                    out[oc, iy, ix] = np.sum(K[oc] * patch) + b[oc]
        x = np.maximum(out, 0.0)
    return cnn.W_dense.values @ x.reshape(-1) + cnn.b_dense.values


class TestWeatherEncoder:
    def test_matches_scripted_oracle(self):
        rng = np.random.default_rng(0)
        cnn = ConvStackParams.init(rng, 16, 16, channels=(2, 3, 2), out_dim=4)
        field = rng.normal(0.0, 1.0, (len(CHANNELS), 16, 16))
        code = encode_weather(field, cnn)
        assert np.allclose(code.values, _oracle_conv_stack(field, cnn), atol=1e-9)

    def test_zero_field_zero_code(self):
        rng = np.random.default_rng(1)
        cnn = ConvStackParams.init(rng, 16, 16, channels=(2, 2, 2), out_dim=3)
        grid = WeatherGrid(0.0, 0.0, 1.0, 1.0, 35000.0, np.zeros((len(CHANNELS), 16, 16)))
        code = encode_weather(grid, cnn)
        assert np.all(code.values == 0.0)

    def test_receptive_field_locality(self):
        # 16 -> 7 -> 3 -> 1: the single output cell never sees row/col 15.
        rng = np.random.default_rng(2)
        cnn = ConvStackParams.init(rng, 16, 16, channels=(2, 2, 2), out_dim=3)
        field = rng.normal(0.0, 1.0, (len(CHANNELS), 16, 16))
        base = encode_weather(field, cnn).values
        outside = field.copy()
        outside[:, 15, :] += 50.0
        outside[:, :, 15] += 50.0
        assert np.array_equal(encode_weather(outside, cnn).values, base)
        inside = field.copy()
        inside[3, 7, 7] += 50.0
        assert not np.allclose(encode_weather(inside, cnn).values, base)

    def test_grid_too_small(self):
        rng = np.random.default_rng(3)
        with pytest.raises(ValueError, match="too small"):
            ConvStackParams.init(rng, 8, 8)

    def test_shape_mismatch(self):
        rng = np.random.default_rng(4)
        cnn = ConvStackParams.init(rng, 16, 16, channels=(2, 2, 2), out_dim=3)
        with pytest.raises(ValueError, match="does not match"):
            encode_weather(np.zeros((len(CHANNELS), 15, 16)), cnn)


# ---------------------------------------------------------------------------
# attention stages


class TestInputAttention:
    def test_identical_embeddings_uniform(self):
        x = Tensor(np.ones(5))
        W_series = Tensor(np.tile([[0.3, -0.4]], (5, 1)))
        W_q = Tensor(np.array([[0.7, 0.1], [0.2, -0.5]]))
        W_k = Tensor(np.eye(2))
        alpha = input_attention(x, Tensor(np.array([0.4, -0.2])), W_series, W_q, W_k, 2)
        assert np.allclose(alpha.values, 0.2)

    def test_single_series(self):
        alpha = input_attention(Tensor(np.array([2.0])), Tensor(np.array([1.0])),
                                Tensor(np.array([[0.5]])), Tensor(np.array([[1.0]])),
                                Tensor(np.array([[1.0]])), 1)
        assert alpha.values.shape == (1,)
        assert alpha.values[0] == 1.0

    def test_ln9_gap_gives_90_10(self):
        # d_e=1 and unit scale factors so the scores are exactly (ln 9, 0).
        x = Tensor(np.ones(2))
        W_series = Tensor(np.array([[math.log(9.0)], [0.0]]))
        W_q = Tensor(np.array([[1.0]]))
        W_k = Tensor(np.array([[1.0]]))
        h = Tensor(np.array([0.5]))  # q = 0.5, scale n/sqrt(d_e) = 2
        alpha = input_attention(x, h, W_series, W_q, W_k, 1)
        assert np.allclose(alpha.values, [0.9, 0.1], atol=1e-12)

    def test_weights_sum_to_one(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            n, d_e, d_h = rng.integers(1, 9), int(rng.integers(1, 5)), int(rng.integers(1, 6))
            alpha = input_attention(
                Tensor(rng.normal(0, 1, int(n))), Tensor(rng.normal(0, 1, d_h)),
                Tensor(rng.normal(0, 1, (int(n), d_e))), Tensor(rng.normal(0, 1, (d_e, d_h))),
                Tensor(rng.normal(0, 1, (d_e, d_e))), d_e)
            assert abs(alpha.values.sum() - 1.0) < 1e-9
            assert np.all(alpha.values >= 0.0)

    def test_series_count_mismatch(self):
        with pytest.raises(ValueError, match="series"):
            input_attention(Tensor(np.ones(3)), Tensor(np.ones(2)),
                            Tensor(np.ones((2, 2))), Tensor(np.ones((2, 2))),
                            Tensor(np.ones((2, 2))), 2)


class TestTemporalAttention:
    def test_equal_states_context_is_that_state(self):
        state = np.array([0.3, -1.2, 0.7])
        H = Tensor(np.tile(state, (4, 1)))
        rng = np.random.default_rng(0)
        beta, ctx = temporal_attention(H, Tensor(rng.normal(0, 1, 3)),
                                       Tensor(rng.normal(0, 1, (2, 3))),
                                       Tensor(rng.normal(0, 1, (3, 2))), 2)
        assert np.allclose(beta.values, 0.25)
        assert np.allclose(ctx.values, state)

    def test_single_state(self):
        state = Tensor(np.array([1.5, -0.5]))
        beta, ctx = temporal_attention([state], Tensor(np.zeros(2)),
                                       Tensor(np.zeros((1, 2))), Tensor(np.zeros((2, 1))), 1)
        assert beta.values.shape == (1,) and beta.values[0] == 1.0
        assert np.array_equal(ctx.values, state.values)

    def test_score_spike_pins_context(self):
        # Scores come out as (90, 0, 0); a 20+ gap saturates the softmax.
        spike = np.array([10.0, 10.0])
        H = Tensor(np.array([spike, [0.0, 0.0], [0.0, 0.0]]))
        W_k = Tensor(np.ones((2, 1)))
        W_q = Tensor(np.array([[0.75, 0.75]]))
        beta, ctx = temporal_attention(H, Tensor(np.ones(2)), W_q, W_k, 1)
        assert beta.values[0] > 1.0 - 1e-9
        assert np.allclose(ctx.values, spike, atol=1e-6)

    def test_weights_sum_to_one(self):
        rng = np.random.default_rng(6)
        for _ in range(10):
            t_len, d_h, d_e = int(rng.integers(1, 7)), int(rng.integers(1, 6)), int(rng.integers(1, 5))
            beta, _ = temporal_attention(
                Tensor(rng.normal(0, 1, (t_len, d_h))), Tensor(rng.normal(0, 1, d_h)),
                Tensor(rng.normal(0, 1, (d_e, d_h))), Tensor(rng.normal(0, 1, (d_h, d_e))), d_e)
            assert abs(beta.values.sum() - 1.0) < 1e-9

    def test_list_and_stacked_agree(self):
        rng = np.random.default_rng(7)
        seq = [Tensor(rng.normal(0, 1, 3)) for _ in range(4)]
        H = Tensor(np.stack([s.values for s in seq]))
        q = Tensor(rng.normal(0, 1, 3))
        W_q, W_k = Tensor(rng.normal(0, 1, (2, 3))), Tensor(rng.normal(0, 1, (3, 2)))
        b1, c1 = temporal_attention(seq, q, W_q, W_k, 2)
        b2, c2 = temporal_attention(H, q, W_q, W_k, 2)
        assert np.allclose(b1.values, b2.values) and np.allclose(c1.values, c2.values)

    def test_empty_sequence_rejected(self):
        with pytest.raises(ValueError, match="at least one"):
            temporal_attention([], Tensor(np.zeros(2)),
                               Tensor(np.zeros((1, 2))), Tensor(np.zeros((2, 1))), 1)


# ---------------------------------------------------------------------------
# kinematics


class TestDeriveKinematics:
    def test_one_km_east(self):
        a = GeoPoint(40.0, -100.0, 10000.0)
        b = destination_point(a, 90.0, 1000.0)
        (tr,) = derive_kinematics([a, b])
        assert tr.ground_speed == pytest.approx(100.0, rel=1e-9)
        assert tr.theta_deg == pytest.approx(90.0, abs=1e-6)
        assert tr.v[0] == pytest.approx(100.0, rel=1e-6)
        assert abs(tr.v[1]) < 1e-3 and tr.v[2] == 0.0
        assert tr.point == b

    def test_due_north(self):
        a = GeoPoint(10.0, 5.0, 8000.0)
        b = destination_point(a, 0.0, 2000.0)
        (tr,) = derive_kinematics([a, b])
        assert tr.theta_deg == pytest.approx(0.0, abs=1e-9)
        assert tr.v[1] == pytest.approx(200.0, rel=1e-9)
        assert abs(tr.v[0]) < 1e-9

    def test_stationary_pair(self):
        p = GeoPoint(40.0, -100.0, 9000.0)
        (tr,) = derive_kinematics([p, p])
        assert tr.ground_speed == 0.0 and np.all(tr.v == 0.0)
        assert tr.theta_deg == 0.0  # leading stationary step defaults to 0

    def test_angle_carried_through_stationary_and_vertical(self):
        a = GeoPoint(40.0, -100.0, 9000.0)
        b = destination_point(a, 90.0, 1000.0)
        c = GeoPoint(b.lat, b.lon, b.alt + 50.0)  # vertical-only step
        trips = derive_kinematics([a, b, c, c])
        assert len(trips) == 3
        assert trips[1].theta_deg == trips[0].theta_deg
        assert trips[1].v[2] == pytest.approx(5.0)
        assert trips[1].ground_speed == 0.0
        assert trips[2].theta_deg == trips[0].theta_deg

    def test_one_triple_per_step_at_arrival(self):
        rng = np.random.default_rng(0)
        pts = [destination_point(GeoPoint(40.0, -100.0, 10000.0), 45.0, 2000.0 * k)
               for k in range(5)]
        trips = derive_kinematics(pts)
        assert len(trips) == 4
        for tr, arrival in zip(trips, pts[1:]):
            assert tr.point == arrival

    def test_dt_scales_speed(self):
        a = GeoPoint(0.0, 0.0, 0.0)
        b = destination_point(a, 90.0, 1000.0)
        (tr,) = derive_kinematics([a, b], dt=5.0)
        assert tr.ground_speed == pytest.approx(200.0, rel=1e-9)

    def test_errors(self):
        p = GeoPoint(0.0, 0.0, 0.0)
        with pytest.raises(ValueError, match="at least 2"):
            derive_kinematics([p])
        with pytest.raises(ValueError, match="positive"):
            derive_kinematics([p, p], dt=0.0)

    def test_triple_validation(self):
        p = GeoPoint(0.0, 0.0, 0.0)
        with pytest.raises(ValueError, match="track angle"):
            KinematicTriple(v=np.zeros(3), theta_deg=360.0, point=p)
        with pytest.raises(ValueError, match="finite 3-vector"):
            KinematicTriple(v=np.array([1.0, np.inf, 0.0]), theta_deg=0.0, point=p)
        tr = KinematicTriple(v=np.array([3.0, 4.0, 12.0]), theta_deg=36.87, point=p)
        assert tr.ground_speed == pytest.approx(5.0)


# ---------------------------------------------------------------------------
# LVA loss


def _triples_along(start, bearing, step_m, n, v=None, theta=None):
    pts = [destination_point(start, bearing, step_m * k) for k in range(n + 1)]
    trips = derive_kinematics(pts)
    if v is not None or theta is not None:
        trips = [KinematicTriple(v=v if v is not None else t.v,
                                 theta_deg=theta if theta is not None else t.theta_deg,
                                 point=t.point) for t in trips]
    return trips


class TestLvaLoss:
    def test_identical_is_zero(self):
        trips = _triples_along(GeoPoint(40.0, -100.0, 10000.0), 77.0, 2300.0, 4)
        assert lva_loss(trips, trips).item() == 0.0

    def test_pure_position_offset(self):
        start = GeoPoint(40.0, -100.0, 10000.0)
        truth = _triples_along(start, 90.0, 2300.0, 3)
        pred = [KinematicTriple(v=t.v, theta_deg=t.theta_deg,
                                point=destination_point(t.point, 0.0, 100.0, alt=t.point.alt))
                for t in truth]
        assert lva_loss(pred, truth).item() == pytest.approx(10_000.0, rel=1e-6)

    def test_angle_wraps_to_100(self):
        truth = _triples_along(GeoPoint(40.0, -100.0, 10000.0), 5.0, 2300.0, 2)
        pred = [KinematicTriple(v=t.v, theta_deg=(t.theta_deg + 350.0) % 360.0, point=t.point)
                for t in truth]
        assert lva_loss(pred, truth).item() == pytest.approx(100.0, abs=1e-9)

    def test_velocity_term_is_squared_norm(self):
        truth = _triples_along(GeoPoint(40.0, -100.0, 10000.0), 90.0, 2300.0, 2)
        pred = [KinematicTriple(v=t.v + np.array([3.0, 0.0, 4.0]), theta_deg=t.theta_deg,
                                point=t.point) for t in truth]
        assert lva_loss(pred, truth).item() == pytest.approx(25.0, rel=1e-12)

    def test_per_term_weights(self):
        start = GeoPoint(40.0, -100.0, 10000.0)
        truth = _triples_along(start, 90.0, 2300.0, 2)
        pred = [KinematicTriple(v=t.v + np.array([1.0, 0.0, 0.0]),
                                theta_deg=(t.theta_deg + 2.0) % 360.0,
                                point=GeoPoint(t.point.lat, t.point.lon, t.point.alt + 10.0))
                for t in truth]
        assert lva_loss(pred, truth, (1.0, 0.0, 0.0)).item() == pytest.approx(1.0, rel=1e-12)
        assert lva_loss(pred, truth, (0.0, 1.0, 0.0)).item() == pytest.approx(4.0, rel=1e-12)
        assert lva_loss(pred, truth, (0.0, 0.0, 1.0)).item() == pytest.approx(100.0, rel=1e-12)

    def test_altitude_enters_distance_term(self):
        truth = _triples_along(GeoPoint(40.0, -100.0, 10000.0), 90.0, 2300.0, 2)
        pred = [KinematicTriple(v=t.v, theta_deg=t.theta_deg,
                                point=GeoPoint(t.point.lat, t.point.lon, t.point.alt + 30.0))
                for t in truth]
        assert lva_loss(pred, truth).item() == pytest.approx(900.0, rel=1e-12)

    def test_errors(self):
        trips = _triples_along(GeoPoint(40.0, -100.0, 10000.0), 90.0, 2300.0, 3)
        with pytest.raises(ValueError, match="length mismatch"):
            lva_loss(trips[:2], trips)
        with pytest.raises(ValueError, match="at least 2"):
            lva_loss(trips[:1], trips[:1])
        with pytest.raises(ValueError, match="weights"):
            lva_loss(trips, trips, (1.0, -1.0, 1.0))
        with pytest.raises(ValueError, match="weights"):
            lva_loss(trips, trips, (1.0, 1.0))


# ---------------------------------------------------------------------------
# end-to-end gradient


class TestEndToEndGradient:
    def test_finite_difference_4_step_toy(self):
        # Near the origin so coordinate ulps are far below the FD step.
        rng = np.random.default_rng(7)
        pts = [destination_point(GeoPoint(0.02, -0.03, 9000.0), 77.0, k * 2300.0)
               for k in range(8)]
        grid = synth_weather_grid(rng, lat0=-0.2, lon0=-0.3, lat1=0.25, lon1=0.35,
                                  nx=16, ny=16)
        toy = EnrouteSample("T", tuple(pts[:4]), tuple(pts[:1] * 10), True,
                            (grid,) * 4, tuple(pts[4:]))
        params = small_params([toy], seed=7)
        raw = teacher_forced_loss(toy, params).item()
        scaled = (1.0 / raw,) * 3  # unit-scale loss keeps FD noise below threshold
        err = finite_diff_gradcheck(lambda: teacher_forced_loss(toy, params, scaled),
                                    params.tensors(), eps=2e-5, floor=1e-5)
        assert err < 1e-4


# ---------------------------------------------------------------------------
# training


class TestTraining:
    def test_straight_line_loss_drops_below_5_percent(self):
        rng = np.random.default_rng(0)
        samples = [straight_sample(rng, f"S{i}", t_obs=8, horizon=6) for i in range(16)]
        cfg = EnrouteTrainConfig(epochs=30, seed=1, d_h=10, d_e=5,
                                 cnn_channels=(2, 3, 3), cnn_dim=4, plan_dim=4)
        params, report = train_enroute(samples, cfg)
        assert len(report.train_loss) == 30
        assert report.train_loss[-1] < 0.05 * report.train_loss[0]

    def test_zero_epochs_returns_init(self):
        rng = np.random.default_rng(1)
        samples = [straight_sample(rng, f"S{i}") for i in range(3)]
        cfg = EnrouteTrainConfig(epochs=0, seed=9, d_h=6, d_e=4,
                                 cnn_channels=(2, 2, 2), cnn_dim=3, plan_dim=3)
        params, report = train_enroute(samples, cfg)
        assert report.train_loss == ()
        expect = small_params(samples, seed=9)
        for got, want in zip(params.tensors(), expect.tensors()):
            assert np.array_equal(got.values, want.values)

    def test_same_seed_identical_checkpoint(self, tmp_path):
        rng = np.random.default_rng(2)
        samples = [straight_sample(rng, f"S{i}") for i in range(4)]
        cfg = EnrouteTrainConfig(epochs=2, seed=5, d_h=6, d_e=4,
                                 cnn_channels=(2, 2, 2), cnn_dim=3, plan_dim=3)
        paths = []
        for name in ("one.ckpt", "two.ckpt"):
            params, _ = train_enroute(samples, cfg)
            path = tmp_path / name
            save_enroute(path, params, seed=cfg.seed)
            paths.append(path)
        assert paths[0].read_bytes() == paths[1].read_bytes()

    def test_divergence_aborts_with_diagnostics(self):
        rng = np.random.default_rng(3)
        samples = [straight_sample(rng, f"S{i}") for i in range(2)]
        cfg = EnrouteTrainConfig(epochs=6, lr=1e200, seed=0, d_h=6, d_e=4,
                                 cnn_channels=(2, 2, 2), cnn_dim=3, plan_dim=3)
        with np.errstate(all="ignore"), pytest.raises(TrainingDiverged):
            train_enroute(samples, cfg)

    def test_validation_curve_tracks_epochs(self):
        rng = np.random.default_rng(4)
        samples = [straight_sample(rng, f"S{i}") for i in range(3)]
        held = [straight_sample(rng, "V0")]
        cfg = EnrouteTrainConfig(epochs=3, seed=0, d_h=6, d_e=4,
                                 cnn_channels=(2, 2, 2), cnn_dim=3, plan_dim=3)
        params, report = train_enroute(samples, cfg, val_samples=held)
        assert len(report.val_loss) == 3
        assert report.val_loss[-1] == pytest.approx(
            evaluate_enroute(held, params), rel=1e-12)

    def test_input_errors(self):
        rng = np.random.default_rng(5)
        cfg = EnrouteTrainConfig(epochs=1, d_h=6, d_e=4,
                                 cnn_channels=(2, 2, 2), cnn_dim=3, plan_dim=3)
        with pytest.raises(ValueError, match="no training samples"):
            train_enroute([], cfg)
        short = straight_sample(rng, "S0", t_obs=6, horizon=1)
        with pytest.raises(ValueError, match="at least 2 target steps"):
            train_enroute([short], cfg)
        a = straight_sample(rng, "A", ny=16, nx=16)
        b = straight_sample(rng, "B", ny=17, nx=16)
        with pytest.raises(ValueError, match="grid"):
            train_enroute([a, b], cfg)

    def test_config_validation(self):
        with pytest.raises(ValueError, match="epochs"):
            EnrouteTrainConfig(epochs=-1)
        with pytest.raises(ValueError, match="lr"):
            EnrouteTrainConfig(epochs=1, lr=0.0)
        with pytest.raises(ValueError, match="channel"):
            EnrouteTrainConfig(epochs=1, cnn_channels=(2, 2))
        with pytest.raises(ValueError, match="weights"):
            EnrouteTrainConfig(epochs=1, loss_weights=(1.0, 1.0, -2.0))

    def test_evaluate_matches_manual_mean(self):
        rng = np.random.default_rng(6)
        samples = [straight_sample(rng, f"S{i}") for i in range(3)]
        params = small_params(samples, seed=2)
        manual = np.mean([teacher_forced_loss(s, params).item() for s in samples])
        assert evaluate_enroute(samples, params) == pytest.approx(manual, rel=1e-12)
        with pytest.raises(ValueError, match="no samples"):
            evaluate_enroute([], params)

    def test_fit_normalizer(self):
        pts = [GeoPoint(40.0, -100.0, 10000.0), GeoPoint(41.0, -99.0, 11000.0)]
        rng = np.random.default_rng(7)
        s = straight_sample(rng, "S0")
        norm = fit_enroute_normalizer([s])
        rows = np.array([[p.lat, p.lon, p.alt] for p in (*s.observed, *s.target)])
        assert np.allclose(norm.mean, rows.mean(axis=0))
        assert np.allclose(norm.std, np.maximum(rows.std(axis=0), 1e-6))
        with pytest.raises(ValueError, match="no positions"):
            fit_enroute_normalizer([])


# ---------------------------------------------------------------------------
# prediction


class TestPrediction:
    def test_horizon_validation(self):
        rng = np.random.default_rng(0)
        s = straight_sample(rng, "S0")
        params = small_params([s])
        with pytest.raises(ValueError, match="horizon"):
            predict_enroute(s, params, 0)
        with pytest.raises(ValueError, match="horizon"):
            predict_enroute(s, params, -3)

    def test_horizon_one_single_waypoint(self):
        rng = np.random.default_rng(1)
        s = straight_sample(rng, "S0")
        params = small_params([s])
        out = predict_enroute(s, params, 1)
        assert len(out) == 1 and isinstance(out[0], GeoPoint)

    def test_deterministic(self):
        rng = np.random.default_rng(2)
        s = straight_sample(rng, "S0")
        params = small_params([s])
        one = predict_enroute(s, params, 5)
        two = predict_enroute(s, params, 5)
        assert one == two

    def test_prefix_consistency(self):
        # Closed-loop decoding: a longer horizon extends, not changes, a shorter one.
        rng = np.random.default_rng(3)
        s = straight_sample(rng, "S0")
        params = small_params([s])
        assert predict_enroute(s, params, 6)[:3] == predict_enroute(s, params, 3)

    def test_plan_absent_accepted(self):
        rng = np.random.default_rng(4)
        s = straight_sample(rng, "S0")
        bare = dataclasses.replace(s, plan_present=False)
        params = small_params([bare])
        out = predict_enroute(bare, params, 4)
        assert len(out) == 4

    def test_weather_perturbation_changes_prediction(self):
        rng = np.random.default_rng(5)
        s = straight_sample(rng, "S0")
        params = small_params([s])
        base = predict_enroute(s, params, 4)
        g = s.weather[0]
        bumped_values = g.values.copy()
        bumped_values[CHANNELS.index("VVEL"), 7, 7] += 40.0
        bumped = dataclasses.replace(g, values=bumped_values)
        other = dataclasses.replace(s, weather=(bumped,) * len(s.weather))
        assert predict_enroute(other, params, 4) != base

    def test_zero_conv_weights_weather_invariant(self):
        rng = np.random.default_rng(6)
        s = straight_sample(rng, "S0")
        params = small_params([s])
        for t in params.conv.tensors():
            t.values[...] = 0.0
        wild = dataclasses.replace(
            s, weather=(make_grid(np.random.default_rng(99)),) * len(s.weather))
        assert predict_enroute(s, params, 5) == predict_enroute(wild, params, 5)

    def test_beats_constant_velocity_on_held_out_straight_lines(self):
        # Noisy straight tracks: naive last-displacement extrapolation keeps
        # the jitter of the final observed step; the trained forecaster can
        # average velocity over the whole window.
        rng = np.random.default_rng(10)
        train = [straight_sample(rng, f"S{i}", t_obs=12, horizon=16, sigma=50.0)
                 for i in range(24)]
        held = [straight_sample(rng, f"H{i}", t_obs=12, horizon=16, sigma=50.0)
                for i in range(8)]
        cfg = EnrouteTrainConfig(epochs=40, seed=3, d_h=12, d_e=6,
                                 cnn_channels=(3, 4, 4), cnn_dim=6, plan_dim=5,
                                 loss_weights=(1.0, 0.1, 1e-4))
        params, _ = train_enroute(train, cfg)
        model_err = np.mean([ade(predict_enroute(s, params, 16), list(s.target)) for s in held])
        cv_err = np.mean([ade(cv_extrapolate(s.observed, 16), list(s.target)) for s in held])
        assert model_err < cv_err


# ---------------------------------------------------------------------------
# checkpointing


class TestCheckpoint:
    def _params(self, seed=0):
        rng = np.random.default_rng(seed)
        s = straight_sample(rng, "S0")
        return straight_sample, small_params([s], seed=seed), s

    def test_round_trip(self, tmp_path):
        _, params, _ = self._params(3)
        path = tmp_path / "m.ckpt"
        save_enroute(path, params, seed=11)
        loaded, seed = load_enroute(path)
        assert seed == 11
        assert loaded.hyperparameters() == params.hyperparameters()
        for got, want in zip(loaded.tensors(), params.tensors()):
            assert np.array_equal(got.values, want.values)
        assert np.array_equal(loaded.normalizer.mean, params.normalizer.mean)
        assert np.array_equal(loaded.normalizer.std, params.normalizer.std)

    def test_loaded_predicts_identically(self, tmp_path):
        rng = np.random.default_rng(4)
        s = straight_sample(rng, "S0")
        params = small_params([s], seed=4)
        path = tmp_path / "m.ckpt"
        save_enroute(path, params)
        loaded, _ = load_enroute(path)
        assert predict_enroute(s, loaded, 5) == predict_enroute(s, params, 5)

    def test_missing_tensor_rejected(self, tmp_path):
        _, params, _ = self._params(5)
        named = params.checkpoint_tensors()
        named.pop("head/W")
        path = tmp_path / "broken.ckpt"
        save_checkpoint(path, named, 0, hyperparameters=params.hyperparameters())
        with pytest.raises(ValueError, match="missing tensor"):
            load_enroute(path)

    def test_unexpected_tensor_rejected(self, tmp_path):
        _, params, _ = self._params(6)
        named = params.checkpoint_tensors()
        named["rogue/W"] = np.zeros(3)
        path = tmp_path / "broken.ckpt"
        save_checkpoint(path, named, 0, hyperparameters=params.hyperparameters())
        with pytest.raises(ValueError, match="unexpected tensors"):
            load_enroute(path)

    def test_missing_hyperparameter_rejected(self, tmp_path):
        _, params, _ = self._params(7)
        hp = params.hyperparameters()
        hp.pop("plan_dim")
        path = tmp_path / "broken.ckpt"
        save_checkpoint(path, params.checkpoint_tensors(), 0, hyperparameters=hp)
        with pytest.raises(ValueError, match="missing hyperparameter"):
            load_enroute(path)

    def test_inconsistent_series_rejected(self, tmp_path):
        _, params, _ = self._params(8)
        hp = params.hyperparameters()
        hp["plan_dim"] = params.plan_dim + 1
        path = tmp_path / "broken.ckpt"
        save_checkpoint(path, params.checkpoint_tensors(), 0, hyperparameters=hp)
        with pytest.raises(ValueError, match="inconsistent"):
            load_enroute(path)
