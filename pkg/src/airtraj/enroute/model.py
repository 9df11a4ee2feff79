"""Dual-stage attention forecaster for cruise-phase trajectories.

Each observed step is summarised as a vector of driving series: z-space
position, velocity components, track angle, a learned encoding of the
weather grid, and a flight-plan embedding. An input-attention stage
reweights those series before an encoder LSTM consumes them; a decoder
LSTM then runs autoregressively, attending over the encoder states each
step, and emits z-space displacements that integrate into predicted
positions. Training compares per-step velocity, track angle, and 3-D
position against the flown track.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from ..constraints import EARTH_RADIUS_M, GeoPoint, normalize_lon, wrap_angle_deg
from ..neuralcore.checkpoint import load_checkpoint, save_checkpoint
from ..neuralcore.layers import (
    LstmState,
    LstmWeights,
    conv2d_forward,
    dense_forward,
    embed,
    lstm_cell_step,
    uniform_init,
)
from ..neuralcore.optim import (
    DEFAULT_CLIP,
    DEFAULT_LR,
    AdamState,
    adam_step,
    clip_global_norm,
)
from ..neuralcore.tensor import (
    Tensor,
    asin,
    atan2,
    clip,
    concat,
    cos,
    matmul,
    parameter,
    relu,
    reshape,
    sin,
    softmax,
    sqrt,
    square,
    sum_,
)
from ..structural_model import MIN_NORM_STD, SceneNormalizer, TrainingDiverged
from .kinematics import STEP_S, KinematicTriple, derive_kinematics
from .sample import PLAN_LENGTH, EnrouteSample
from .weather import CHANNELS, WeatherGrid, standardize_grid

DEFAULT_D_H = 256
DEFAULT_D_E = 64
DEFAULT_CNN_CHANNELS = (8, 8, 8)
DEFAULT_CNN_DIM = 16
DEFAULT_PLAN_DIM = 9
CONV_KERNEL = 3
CONV_STRIDE = 2
KINEMATIC_DIM = 7  # z position (3) + scaled velocity (3) + scaled track angle (1)
SPEED_NORM_MPS = 100.0
DEFAULT_INPUT_NOISE = 0.25  # jitter on fed-back displacements, in scaled units

_DEG2RAD = math.pi / 180.0


# ---------------------------------------------------------------------------
# Weather encoder


@dataclass
class ConvStackParams:
    """Three stride-2 3x3 ReLU conv layers plus a dense readout.

    The stack is pinned to one grid shape at init time because the dense
    layer's fan-in depends on the spatially reduced output.
    """

    ny: int
    nx: int
    channels: tuple[int, int, int]
    out_dim: int
    layers: tuple[tuple[Tensor, Tensor], ...]  # per layer: kernels (O,C,3,3), bias (O,)
    W_dense: Tensor  # (out_dim, flat)
    b_dense: Tensor  # (out_dim,)

    @staticmethod
    def reduced_dims(ny: int, nx: int, n_layers: int = 3) -> tuple[int, int]:
        """Spatial dims after the conv stack; error if a layer underflows."""
        hy, hx = ny, nx
        for i in range(n_layers):
            if hy < CONV_KERNEL or hx < CONV_KERNEL:
                raise ValueError(
                    f"grid {ny}x{nx} is too small for the conv stack "
                    f"(layer {i} would see {hy}x{hx}, needs at least "
                    f"{CONV_KERNEL}x{CONV_KERNEL})"
                )
            hy = (hy - CONV_KERNEL) // CONV_STRIDE + 1
            hx = (hx - CONV_KERNEL) // CONV_STRIDE + 1
        return hy, hx

    @classmethod
    def init(
        cls,
        rng: np.random.Generator,
        ny: int,
        nx: int,
        channels: tuple[int, int, int] = DEFAULT_CNN_CHANNELS,
        out_dim: int = DEFAULT_CNN_DIM,
    ) -> "ConvStackParams":
        channels = tuple(int(c) for c in channels)
        if len(channels) != 3 or any(c < 1 for c in channels):
            raise ValueError(f"need 3 positive channel widths, got {channels}")
        if out_dim < 1:
            raise ValueError(f"encoder output dim must be positive, got {out_dim}")
        hy, hx = cls.reduced_dims(ny, nx)
        layers = []
        in_c = len(CHANNELS)
        for out_c in channels:
            kernels = parameter(
                uniform_init(rng, (out_c, in_c, CONV_KERNEL, CONV_KERNEL), in_c * CONV_KERNEL**2)
            )
            layers.append((kernels, parameter(np.zeros(out_c))))
            in_c = out_c
        flat = channels[-1] * hy * hx
        return cls(
            ny=int(ny),
            nx=int(nx),
            channels=channels,
            out_dim=int(out_dim),
            layers=tuple(layers),
            W_dense=parameter(uniform_init(rng, (out_dim, flat), flat)),
            b_dense=parameter(np.zeros(out_dim)),
        )

    def tensors(self) -> list[Tensor]:
        out: list[Tensor] = []
        for kernels, bias in self.layers:
            out += [kernels, bias]
        return out + [self.W_dense, self.b_dense]


def encode_weather(grid: WeatherGrid | np.ndarray, cnn: ConvStackParams) -> Tensor:
    """Fixed-length code for one weather grid.

    Accepts a grid object or a pre-scaled (7, ny, nx) array; the array must
    match the shape the stack was initialised for. An all-zero field with
    all-zero biases maps to the zero vector.
    """
    values = grid.values if isinstance(grid, WeatherGrid) else grid
    arr = np.asarray(values, dtype=np.float64)
    expect = (len(CHANNELS), cnn.ny, cnn.nx)
    if arr.shape != expect:
        raise ValueError(f"weather field shape {arr.shape} does not match the conv stack {expect}")
    x = Tensor(arr)
    for kernels, bias in cnn.layers:
        x = relu(conv2d_forward(x, kernels, bias, stride=CONV_STRIDE))
    flat = reshape(x, (x.size,))
    return dense_forward(flat, cnn.W_dense, cnn.b_dense)


# ---------------------------------------------------------------------------
# Attention stages


def input_attention(
    x: Tensor,
    h_query: Tensor,
    W_series: Tensor,
    W_q: Tensor,
    W_k: Tensor,
    d_e: int,
) -> Tensor:
    """Softmax weights over the n driving series at one encoder step.

    Series k is keyed by its value times a learned per-series embedding row;
    keys are scored against the previous encoder hidden state with the same
    m/sqrt(d_e)-scaled dot products the spatial attention uses. Unlike the
    fused spatial op this returns the weights on the tape, because they
    multiply the encoder input directly.
    """
    n = x.shape[0]
    if n < 1:
        raise ValueError("need at least one driving series")
    if W_series.shape[0] != n:
        raise ValueError(f"{W_series.shape[0]} series embeddings for {n} driving series")
    keys = W_series * reshape(x, (n, 1))  # (n, d_e)
    q = matmul(W_q, h_query)
    scores = matmul(matmul(keys, W_k), q) * (n / math.sqrt(d_e))
    return softmax(scores)


def temporal_attention(
    states: Sequence[Tensor] | Tensor,
    h_query: Tensor,
    W_q: Tensor,
    W_k: Tensor,
    d_e: int,
) -> tuple[Tensor, Tensor]:
    """Attention of the decoder over encoder states; returns (weights, context).

    ``states`` is a sequence of (d_h,) hidden states or an already stacked
    (T, d_h) tensor. The context is the weight-averaged encoder state, so
    with identical states it equals any one of them, and a score spike of
    20+ pins the context to the spiked state to within float noise.
    """
    if isinstance(states, Tensor):
        H = states
    else:
        seq = list(states)
        if not seq:
            raise ValueError("need at least one encoder state")
        H = reshape(concat(seq), (len(seq), seq[0].shape[0]))
    t_len, d_h = H.shape
    q = matmul(W_q, h_query)
    scores = matmul(matmul(H, W_k), q) * (t_len / math.sqrt(d_e))
    weights = softmax(scores)
    context = reshape(matmul(reshape(weights, (1, t_len)), H), (d_h,))
    return weights, context


# ---------------------------------------------------------------------------
# Loss over kinematic triples


@dataclass
class _TensorTriple:
    """Tape-valued analogue of KinematicTriple used inside the training loss."""

    v: Tensor  # (3,)
    theta_deg: Tensor  # scalar
    lat: Tensor
    lon: Tensor
    alt: Tensor


def _t(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _triple_parts(tr) -> tuple[Tensor, Tensor, Tensor, Tensor, Tensor]:
    if isinstance(tr, KinematicTriple):
        return (
            Tensor(tr.v),
            Tensor(tr.theta_deg),
            Tensor(tr.point.lat),
            Tensor(tr.point.lon),
            Tensor(tr.point.alt),
        )
    return (_t(tr.v), _t(tr.theta_deg), _t(tr.lat), _t(tr.lon), _t(tr.alt))


def _ground_distance_t(lat_a: Tensor, lon_a: Tensor, lat_b: Tensor, lon_b: Tensor) -> Tensor:
    """Haversine ground distance in meters between tape-valued positions."""
    phi1 = lat_a * _DEG2RAD
    phi2 = lat_b * _DEG2RAD
    dphi = (lat_b - lat_a) * _DEG2RAD
    dlmb = (lon_b - lon_a) * _DEG2RAD
    a = square(sin(dphi * 0.5)) + cos(phi1) * cos(phi2) * square(sin(dlmb * 0.5))
    return asin(sqrt(clip(a, 0.0, 1.0))) * (2.0 * EARTH_RADIUS_M)


def _bearing_t(lat_a: Tensor, lon_a: Tensor, lat_b: Tensor, lon_b: Tensor) -> Tensor:
    """Initial bearing in degrees, range (-180, 180]."""
    phi1 = lat_a * _DEG2RAD
    phi2 = lat_b * _DEG2RAD
    dlmb = (lon_b - lon_a) * _DEG2RAD
    y = sin(dlmb) * cos(phi2)
    x = cos(phi1) * sin(phi2) - sin(phi1) * cos(phi2) * cos(dlmb)
    return atan2(y, x) * (1.0 / _DEG2RAD)


def _wrap_deg_t(d: Tensor) -> Tensor:
    # Constant shift onto (-180, 180]; the gradient passes through unchanged.
    shift = float(d.values) - wrap_angle_deg(float(d.values))
    return d - shift


def lva_loss(
    pred: Sequence,
    truth: Sequence,
    weights: Sequence[float] = (1.0, 1.0, 1.0),
) -> Tensor:
    """Mean per-step error in velocity, track angle, and 3-D position.

    Per step: |V - V_hat|^2 in (m/s)^2, the wrapped angle difference squared
    in deg^2, and the squared 3-D distance (haversine ground distance plus
    altitude delta) in m^2, each scaled by the matching entry of ``weights``.
    Accepts KinematicTriple sequences or tape-valued equivalents; returns a
    scalar tensor, so use .item() for the plain value.
    """
    pred = list(pred)
    truth = list(truth)
    if len(pred) != len(truth):
        raise ValueError(f"length mismatch: {len(pred)} predicted vs {len(truth)} truth steps")
    if len(pred) < 2:
        raise ValueError(f"need at least 2 steps, got {len(pred)}")
    w = tuple(float(v) for v in weights)
    if len(w) != 3 or any(not math.isfinite(v) or v < 0.0 for v in w):
        raise ValueError(f"weights must be 3 finite non-negative values, got {weights!r}")

    total = Tensor(0.0)
    for p, t in zip(pred, truth):
        vp, thp, latp, lonp, altp = _triple_parts(p)
        vt, tht, latt, lont, altt = _triple_parts(t)
        term_v = sum_(square(vp - vt))
        term_a = square(_wrap_deg_t(thp - tht))
        ground = _ground_distance_t(latt, lont, latp, lonp)
        term_d = square(ground) + square(altp - altt)
        total = total + term_v * w[0] + term_a * w[1] + term_d * w[2]
    return total * (1.0 / len(pred))


# ---------------------------------------------------------------------------
# Parameters


@dataclass
class DualAttnParams:
    """All learned tensors plus layout constants for the forecaster."""

    d_h: int
    d_e: int
    cnn_dim: int
    plan_dim: int
    conv: ConvStackParams
    W_plan: Tensor  # (plan_dim, 3*PLAN_LENGTH)
    W_series: Tensor  # (n_series, d_e)
    W_q_in: Tensor  # (d_e, d_h)
    W_k_in: Tensor  # (d_e, d_e)
    lstm_enc: LstmWeights  # n_series -> d_h
    W_q_tmp: Tensor  # (d_e, d_h)
    W_k_tmp: Tensor  # (d_h, d_e)
    lstm_dec: LstmWeights  # 3 + d_h -> d_h
    W_out: Tensor  # (3, 2*d_h)
    b_out: Tensor  # (3,)
    normalizer: SceneNormalizer

    @property
    def n_series(self) -> int:
        return KINEMATIC_DIM + self.cnn_dim + self.plan_dim

    @classmethod
    def init(
        cls,
        rng: np.random.Generator,
        normalizer: SceneNormalizer,
        grid_ny: int,
        grid_nx: int,
        d_h: int = DEFAULT_D_H,
        d_e: int = DEFAULT_D_E,
        cnn_channels: tuple[int, int, int] = DEFAULT_CNN_CHANNELS,
        cnn_dim: int = DEFAULT_CNN_DIM,
        plan_dim: int = DEFAULT_PLAN_DIM,
    ) -> "DualAttnParams":
        if min(d_h, d_e, cnn_dim, plan_dim) < 1:
            raise ValueError(
                f"dims must be positive: d_h={d_h} d_e={d_e} cnn_dim={cnn_dim} plan_dim={plan_dim}"
            )
        conv = ConvStackParams.init(rng, grid_ny, grid_nx, cnn_channels, cnn_dim)
        n = KINEMATIC_DIM + cnn_dim + plan_dim
        plan_flat = 3 * PLAN_LENGTH
        return cls(
            d_h=int(d_h),
            d_e=int(d_e),
            cnn_dim=int(cnn_dim),
            plan_dim=int(plan_dim),
            conv=conv,
            W_plan=parameter(uniform_init(rng, (plan_dim, plan_flat), plan_flat)),
            W_series=parameter(uniform_init(rng, (n, d_e), d_e)),
            W_q_in=parameter(uniform_init(rng, (d_e, d_h), d_h)),
            W_k_in=parameter(uniform_init(rng, (d_e, d_e), d_e)),
            lstm_enc=LstmWeights.init(rng, n, d_h),
            W_q_tmp=parameter(uniform_init(rng, (d_e, d_h), d_h)),
            W_k_tmp=parameter(uniform_init(rng, (d_h, d_e), d_h)),
            lstm_dec=LstmWeights.init(rng, 3 + d_h, d_h),
            W_out=parameter(uniform_init(rng, (3, 2 * d_h), 2 * d_h)),
            b_out=parameter(np.zeros(3)),
            normalizer=normalizer,
        )

    def tensors(self) -> list[Tensor]:
        return (
            self.conv.tensors()
            + [self.W_plan, self.W_series, self.W_q_in, self.W_k_in]
            + list(self.lstm_enc.tensors())
            + [self.W_q_tmp, self.W_k_tmp]
            + list(self.lstm_dec.tensors())
            + [self.W_out, self.b_out]
        )

    def checkpoint_tensors(self) -> dict[str, Tensor | np.ndarray]:
        named: dict[str, Tensor | np.ndarray] = {}
        for i, (kernels, bias) in enumerate(self.conv.layers):
            named[f"conv/{i}/K"] = kernels
            named[f"conv/{i}/b"] = bias
        named.update(
            {
                "conv/dense/W": self.conv.W_dense,
                "conv/dense/b": self.conv.b_dense,
                "plan/W": self.W_plan,
                "attention_in/W_series": self.W_series,
                "attention_in/W_q": self.W_q_in,
                "attention_in/W_k": self.W_k_in,
                "encoder/lstm/W_x": self.lstm_enc.W_x,
                "encoder/lstm/W_h": self.lstm_enc.W_h,
                "encoder/lstm/b": self.lstm_enc.b,
                "attention_time/W_q": self.W_q_tmp,
                "attention_time/W_k": self.W_k_tmp,
                "decoder/lstm/W_x": self.lstm_dec.W_x,
                "decoder/lstm/W_h": self.lstm_dec.W_h,
                "decoder/lstm/b": self.lstm_dec.b,
                "head/W": self.W_out,
                "head/b": self.b_out,
                "normalizer/mean": self.normalizer.mean,
                "normalizer/std": self.normalizer.std,
            }
        )
        return named

    def hyperparameters(self) -> dict:
        return {
            "d_h": self.d_h,
            "d_e": self.d_e,
            "cnn_dim": self.cnn_dim,
            "plan_dim": self.plan_dim,
            "cnn_channels": list(self.conv.channels),
            "grid_ny": self.conv.ny,
            "grid_nx": self.conv.nx,
        }


def save_enroute(path: str, params: DualAttnParams, seed: int = 0) -> None:
    save_checkpoint(path, params.checkpoint_tensors(), seed, hyperparameters=params.hyperparameters())


def load_enroute(path: str) -> tuple[DualAttnParams, int]:
    """Rebuild forecaster parameters from a checkpoint; returns (params, seed)."""
    arrays, seed, hp = load_checkpoint(path)
    for key in ("d_h", "d_e", "cnn_dim", "plan_dim", "cnn_channels", "grid_ny", "grid_nx"):
        if key not in hp:
            raise ValueError(f"checkpoint is missing hyperparameter {key!r}: {path}")

    def take(name: str) -> np.ndarray:
        try:
            return arrays.pop(name)
        except KeyError:
            raise ValueError(f"checkpoint is missing tensor {name!r}: {path}") from None

    def lstm(prefix: str) -> LstmWeights:
        return LstmWeights(
            W_x=parameter(take(f"{prefix}/W_x")),
            W_h=parameter(take(f"{prefix}/W_h")),
            b=parameter(take(f"{prefix}/b")),
        )

    channels = tuple(int(c) for c in hp["cnn_channels"])
    ny, nx = int(hp["grid_ny"]), int(hp["grid_nx"])
    layers = tuple(
        (parameter(take(f"conv/{i}/K")), parameter(take(f"conv/{i}/b")))
        for i in range(len(channels))
    )
    conv = ConvStackParams(
        ny=ny,
        nx=nx,
        channels=channels,
        out_dim=int(hp["cnn_dim"]),
        layers=layers,
        W_dense=parameter(take("conv/dense/W")),
        b_dense=parameter(take("conv/dense/b")),
    )
    normalizer = SceneNormalizer(mean=take("normalizer/mean"), std=take("normalizer/std"))
    params = DualAttnParams(
        d_h=int(hp["d_h"]),
        d_e=int(hp["d_e"]),
        cnn_dim=int(hp["cnn_dim"]),
        plan_dim=int(hp["plan_dim"]),
        conv=conv,
        W_plan=parameter(take("plan/W")),
        W_series=parameter(take("attention_in/W_series")),
        W_q_in=parameter(take("attention_in/W_q")),
        W_k_in=parameter(take("attention_in/W_k")),
        lstm_enc=lstm("encoder/lstm"),
        W_q_tmp=parameter(take("attention_time/W_q")),
        W_k_tmp=parameter(take("attention_time/W_k")),
        lstm_dec=lstm("decoder/lstm"),
        W_out=parameter(take("head/W")),
        b_out=parameter(take("head/b")),
        normalizer=normalizer,
    )
    if arrays:
        raise ValueError(f"checkpoint holds unexpected tensors {sorted(arrays)}: {path}")
    if params.W_series.shape[0] != params.n_series:
        raise ValueError(
            f"checkpoint is inconsistent: {params.W_series.shape[0]} series embeddings "
            f"for {params.n_series} driving series"
        )
    return params, seed


# ---------------------------------------------------------------------------
# Forward passes


def _driving_features(
    sample: EnrouteSample, params: DualAttnParams
) -> tuple[list[np.ndarray], list[np.ndarray], list[Tensor], Tensor]:
    """Plain kinematic features, z positions, weather codes, plan embedding."""
    norm = params.normalizer
    obs = sample.observed
    z = [norm.normalize(p) for p in obs]
    trips = derive_kinematics(obs)
    kin = []
    for t in range(len(obs)):
        tr = trips[max(t - 1, 0)]  # step 0 borrows the first step's motion
        kin.append(np.concatenate([z[t], tr.v / SPEED_NORM_MPS, [tr.theta_deg / 360.0]]))
    # One grid object is typically shared across the window; encode each
    # distinct grid once per forward pass.
    codes: dict[int, Tensor] = {}
    code_seq = []
    for g in sample.weather:
        key = id(g)
        if key not in codes:
            codes[key] = encode_weather(standardize_grid(g), params.conv)
        code_seq.append(codes[key])
    if sample.plan_present:
        plan_flat = np.concatenate([norm.normalize(w) for w in sample.plan])
    else:
        plan_flat = np.zeros(3 * PLAN_LENGTH)
    plan_vec = embed(Tensor(plan_flat), params.W_plan)
    return kin, z, code_seq, plan_vec


def _encode(
    sample: EnrouteSample, params: DualAttnParams
) -> tuple[list[np.ndarray], Tensor, LstmState]:
    """Run input attention + encoder LSTM over the observed window."""
    kin, z, codes, plan_vec = _driving_features(sample, params)
    state = LstmState.zeros(params.d_h)
    hiddens = []
    for t in range(len(kin)):
        x = concat([Tensor(kin[t]), codes[t], plan_vec])
        alpha = input_attention(x, state.h, params.W_series, params.W_q_in, params.W_k_in, params.d_e)
        state = lstm_cell_step(alpha * x, state, params.lstm_enc)
        hiddens.append(state.h)
    H = reshape(concat(hiddens), (len(hiddens), params.d_h))
    return z, H, state


def _vel_scale(params: DualAttnParams, dt: float) -> np.ndarray:
    """Per-axis factor turning a z-space step into velocity/100 units.

    The decoder exchanges displacements in the same scaled-velocity
    convention the encoder features use, so its inputs and outputs sit at
    O(1) instead of the much smaller raw z step. Lat/lon axes convert from
    degrees to meters on the sphere, longitude at the corpus mean latitude.
    """
    m_per_deg = EARTH_RADIUS_M * _DEG2RAD
    mean_lat = float(params.normalizer.mean[0])
    meters = np.array([m_per_deg, m_per_deg * math.cos(math.radians(mean_lat)), 1.0])
    return params.normalizer.std * meters / (dt * SPEED_NORM_MPS)


def _decode_step(
    params: DualAttnParams, H: Tensor, state: LstmState, prev_disp: Tensor
) -> tuple[LstmState, Tensor]:
    """One decoder step: attend over encoder states, emit a scaled displacement.

    The decoder runs on the previous step's displacement plus the attention
    context; position never feeds back, so a biased step cannot snowball
    through the input the way an integrated coordinate would. Displacements
    on both ends are in velocity/100 units (see _vel_scale).
    """
    _, ctx = temporal_attention(H, state.h, params.W_q_tmp, params.W_k_tmp, params.d_e)
    state = lstm_cell_step(concat([prev_disp, ctx]), state, params.lstm_dec)
    delta = dense_forward(concat([state.h, ctx]), params.W_out, params.b_out)
    return state, delta


def _step_triple(
    prev: tuple[Tensor, Tensor, Tensor], lat: Tensor, lon: Tensor, alt: Tensor, dt: float
) -> _TensorTriple:
    """Kinematics of one step of the predicted chain, by finite differences."""
    p_lat, p_lon, p_alt = prev
    ground = _ground_distance_t(p_lat, p_lon, lat, lon)
    theta = _bearing_t(p_lat, p_lon, lat, lon)
    v_h = ground * (1.0 / dt)
    rad = theta * _DEG2RAD
    v = concat(
        [
            reshape(v_h * sin(rad), (1,)),
            reshape(v_h * cos(rad), (1,)),
            reshape((alt - p_alt) * (1.0 / dt), (1,)),
        ]
    )
    return _TensorTriple(v=v, theta_deg=theta, lat=lat, lon=lon, alt=alt)


def teacher_forced_loss(
    sample: EnrouteSample,
    params: DualAttnParams,
    weights: Sequence[float] = (1.0, 1.0, 1.0),
    dt: float = STEP_S,
    input_noise: float = 0.0,
    rng: np.random.Generator | None = None,
) -> Tensor:
    """Training loss for one sample, with true displacements fed back.

    The decoder input at each step is the ground-truth displacement of the
    step before (its own output takes that place closed loop). The emitted
    displacements integrate into a predicted chain anchored at the last
    observed point, and the whole chain is scored against the target, so
    accumulated drift is penalized rather than just one-step error.

    ``input_noise`` jitters the fed-back displacement (in its scaled units)
    so the decoder cannot just echo its input; a pure echo is a loss
    minimum on near-constant-velocity data but is unstable once the decoder
    runs on its own outputs.
    """
    target = sample.target
    if len(target) < 2:
        raise ValueError(
            f"sample {sample.flight_id!r} needs at least 2 target steps, got {len(target)}"
        )
    if input_noise < 0.0 or not math.isfinite(input_noise):
        raise ValueError(f"input noise must be finite and non-negative, got {input_noise}")
    if input_noise > 0.0 and rng is None:
        raise ValueError("input noise needs an rng")
    norm = params.normalizer
    z, H, state = _encode(sample, params)
    anchors = [sample.observed[-1], *target]
    z_chain = [norm.normalize(p) for p in anchors]
    truth = derive_kinematics(anchors, dt)
    mean, std = norm.mean, norm.std
    scale = _vel_scale(params, dt)
    pos = Tensor(np.array(z_chain[0]))
    prev_pt = (Tensor(anchors[0].lat), Tensor(anchors[0].lon), Tensor(anchors[0].alt))
    pred = []
    for j in range(len(target)):
        disp_in = (z_chain[j] - z_chain[j - 1] if j > 0 else z[-1] - z[-2]) * scale
        if input_noise > 0.0:
            disp_in = disp_in + rng.normal(0.0, input_noise, 3)
        state, delta = _decode_step(params, H, state, Tensor(disp_in))
        pos = pos + delta * Tensor(1.0 / scale)
        lat = pos[0] * std[0] + mean[0]
        lon = pos[1] * std[1] + mean[1]
        alt = pos[2] * std[2] + mean[2]
        pred.append(_step_triple(prev_pt, lat, lon, alt, dt))
        prev_pt = (lat, lon, alt)
    return lva_loss(pred, truth, weights)


def predict_enroute(sample: EnrouteSample, params: DualAttnParams, horizon: int) -> list[GeoPoint]:
    """Closed-loop forecast of ``horizon`` future positions.

    Deterministic: the decoder feeds its own displacement back in, and the
    integrated z positions map through the stored normalizer.
    """
    if horizon < 1:
        raise ValueError(f"horizon must be positive, got {horizon}")
    norm = params.normalizer
    z, H, state = _encode(sample, params)
    scale = _vel_scale(params, STEP_S)
    prev_disp = Tensor((z[-1] - z[-2]) * scale)
    pos = np.array(z[-1])
    out = []
    for _ in range(int(horizon)):
        state, delta = _decode_step(params, H, state, prev_disp)
        pos = pos + delta.values / scale
        phys = pos * norm.std + norm.mean
        out.append(
            GeoPoint(
                lat=float(np.clip(phys[0], -90.0, 90.0)),
                lon=normalize_lon(float(phys[1])),
                alt=float(phys[2]),
            )
        )
        prev_disp = delta
    return out


# ---------------------------------------------------------------------------
# Training


@dataclass(frozen=True)
class EnrouteTrainConfig:
    """Hyperparameters for en-route training; validated at construction."""

    epochs: int
    lr: float = DEFAULT_LR
    clip: float = DEFAULT_CLIP
    seed: int = 0
    d_h: int = DEFAULT_D_H
    d_e: int = DEFAULT_D_E
    cnn_channels: tuple[int, int, int] = DEFAULT_CNN_CHANNELS
    cnn_dim: int = DEFAULT_CNN_DIM
    plan_dim: int = DEFAULT_PLAN_DIM
    loss_weights: tuple[float, float, float] = (1.0, 1.0, 1.0)
    input_noise: float = DEFAULT_INPUT_NOISE

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError(f"epochs must be non-negative, got {self.epochs}")
        if self.lr <= 0.0 or self.clip <= 0.0:
            raise ValueError(f"lr and clip must be positive, got lr={self.lr} clip={self.clip}")
        if self.input_noise < 0.0 or not math.isfinite(self.input_noise):
            raise ValueError(f"input noise must be finite and non-negative, got {self.input_noise}")
        if min(self.d_h, self.d_e, self.cnn_dim, self.plan_dim) < 1:
            raise ValueError("model dims must be positive")
        if len(self.cnn_channels) != 3 or any(c < 1 for c in self.cnn_channels):
            raise ValueError(f"need 3 positive conv channel widths, got {self.cnn_channels}")
        if len(self.loss_weights) != 3 or any(
            not math.isfinite(w) or w < 0.0 for w in self.loss_weights
        ):
            raise ValueError(f"loss weights must be 3 finite non-negative values, got {self.loss_weights}")


@dataclass(frozen=True)
class EnrouteTrainReport:
    """Per-epoch mean loss curves."""

    train_loss: tuple[float, ...]
    val_loss: tuple[float, ...]


def fit_enroute_normalizer(samples: Iterable[EnrouteSample]) -> SceneNormalizer:
    """Position mean/std over all observed and target points."""
    rows = []
    for s in samples:
        for p in (*s.observed, *s.target):
            rows.append([p.lat, p.lon, p.alt])
    if not rows:
        raise ValueError("no positions to fit a normalizer on")
    arr = np.asarray(rows, dtype=np.float64)
    std = np.maximum(arr.std(axis=0), MIN_NORM_STD)
    return SceneNormalizer(mean=arr.mean(axis=0), std=std)


def _check_samples(samples: list[EnrouteSample], ny: int, nx: int) -> None:
    for s in samples:
        if len(s.target) < 2:
            raise ValueError(
                f"sample {s.flight_id!r} needs at least 2 target steps, got {len(s.target)}"
            )
        for g in s.weather:
            if (g.ny, g.nx) != (ny, nx):
                raise ValueError(
                    f"sample {s.flight_id!r} has a {g.ny}x{g.nx} grid; this run uses {ny}x{nx}"
                )


def train_enroute(
    samples: Iterable[EnrouteSample],
    config: EnrouteTrainConfig,
    val_samples: Iterable[EnrouteSample] = (),
) -> tuple[DualAttnParams, EnrouteTrainReport]:
    """Adam over the teacher-forced loss, one sample per step.

    Deterministic for a fixed config and dataset: one generator drives both
    the init and the per-epoch sample order.
    """
    samples = list(samples)
    val_samples = list(val_samples)
    if not samples:
        raise ValueError("no training samples")
    ny, nx = samples[0].weather[0].ny, samples[0].weather[0].nx
    _check_samples(samples + val_samples, ny, nx)

    rng = np.random.default_rng(config.seed)
    params = DualAttnParams.init(
        rng,
        fit_enroute_normalizer(samples),
        ny,
        nx,
        d_h=config.d_h,
        d_e=config.d_e,
        cnn_channels=config.cnn_channels,
        cnn_dim=config.cnn_dim,
        plan_dim=config.plan_dim,
    )
    tensors = params.tensors()
    adam = AdamState.for_params(tensors)
    train_curve: list[float] = []
    val_curve: list[float] = []
    for epoch in range(config.epochs):
        order = rng.permutation(len(samples))
        epoch_losses = []
        for idx in order:
            s = samples[idx]
            for p in tensors:
                p.zero_grad()
            try:
                loss = teacher_forced_loss(
                    s, params, config.loss_weights, input_noise=config.input_noise, rng=rng
                )
                value = loss.item()
                loss.backward()
            except ArithmeticError as exc:
                raise TrainingDiverged(
                    f"training diverged at epoch {epoch} on sample {s.flight_id!r} "
                    f"(lr={config.lr}): {exc}"
                ) from exc
            if not math.isfinite(value):
                raise TrainingDiverged(
                    f"loss became non-finite at epoch {epoch} on sample {s.flight_id!r}"
                )
            clip_global_norm(tensors, config.clip)
            adam_step(tensors, adam, lr=config.lr)
            epoch_losses.append(value)
        train_curve.append(float(np.mean(epoch_losses)))
        if val_samples:
            val_curve.append(evaluate_enroute(val_samples, params, config.loss_weights))
    return params, EnrouteTrainReport(train_loss=tuple(train_curve), val_loss=tuple(val_curve))


def evaluate_enroute(
    samples: Iterable[EnrouteSample],
    params: DualAttnParams,
    weights: Sequence[float] = (1.0, 1.0, 1.0),
) -> float:
    """Mean teacher-forced loss over a sample set."""
    samples = list(samples)
    if not samples:
        raise ValueError("no samples to evaluate")
    return float(np.mean([teacher_forced_loss(s, params, weights).item() for s in samples]))
