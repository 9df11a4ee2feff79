"""Structural recurrent trajectory model over spatio-temporal aircraft graphs.

Three weight-shared recurrent factors process an unrolled scene graph: a
spatial cell stepped on every aircraft pair inside the scene radius, a
temporal cell stepped on every aircraft's own frame-to-frame motion, and a
per-aircraft node cell whose hidden state feeds a trivariate Gaussian over
the next (lat, lon, alt). Because the factors are shared, parameter shapes
are independent of how many aircraft a scene contains.

Interaction context reaches the node cell in one of two ways:

    "attention"     soft attention over the incident spatial hidden states,
                    queried by the aircraft's temporal hidden state, then
                    embedded together with that temporal hidden
    "no_attention"  the unweighted sum of incident spatial hidden states,
                    concatenated raw with the node feature and the temporal
                    hidden (ablation baseline)

Training is teacher-forced negative log-likelihood under Adam. Inference is
a closed-loop rollout: each step samples next positions for all aircraft
jointly (optionally gated by fitted climb/descend/turn limits), rebuilds the
scene frame from the samples, and feeds it back through the model.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .constraints import (
    ENROUTE,
    ConstraintSet,
    GeoPoint,
    InferReport,
    dist3d,
    haversine,
    infer_step,
    initial_bearing,
)
from .neuralcore import (
    AdamState,
    GaussianParams3,
    LstmState,
    LstmWeights,
    Tensor,
    adam_step,
    clip_global_norm,
    concat,
    embed,
    gaussian3_from_linear,
    gaussian3_nll,
    gaussian3_shift_scale,
    load_checkpoint,
    lstm_cell_step,
    parameter,
    save_checkpoint,
    scaled_dot_attention,
    uniform_init,
)
from .stgraph import EdgeFeature, EdgeKey, NodeState, SceneFrame, STGraph, incident_edges, spatial_pairs

DEFAULT_D_H = 256
DEFAULT_D_EMBED = 64
DEFAULT_LR = 0.005
DEFAULT_CLIP = 5.0
DEFAULT_T_OBS = 18
STEP_S = 10.0
SPEED_NORM_MPS = 100.0
EDGE_DIM = 4  # distance, sin/cos bearing, altitude delta
TEMPORAL_DIM = 4  # normalized displacement (3) + speed
STATE_RETENTION_FRAMES = 2  # reuse a state written at t-1 or t-2; older resets
MIN_NORM_STD = 1e-6
SIGMA_FLOOR = 1e-9  # keeps the covariance factorizable when sigma is scaled to 0
VARIANTS = ("attention", "no_attention")


# ---------------------------------------------------------------------------
# coordinate normalization


@dataclass(frozen=True, eq=False)
class SceneNormalizer:
    """Per-dataset affine map between (lat, lon, alt) and model coordinates.

    Raw degrees and meters live on wildly different scales; the model works
    in z-space, z = (x - mean) / std, and predictions are mapped back with
    the same constants.
    """

    mean: np.ndarray  # (3,)
    std: np.ndarray  # (3,) strictly positive

    def __post_init__(self):
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=np.float64))
        object.__setattr__(self, "std", np.asarray(self.std, dtype=np.float64))
        if self.mean.shape != (3,) or self.std.shape != (3,):
            raise ValueError("normalizer mean and std must be 3-vectors")
        if not (np.all(np.isfinite(self.mean)) and np.all(np.isfinite(self.std))):
            raise ValueError("normalizer constants must be finite")
        if not np.all(self.std > 0.0):
            raise ValueError("normalizer std must be strictly positive")

    @classmethod
    def identity(cls) -> "SceneNormalizer":
        return cls(mean=np.zeros(3), std=np.ones(3))

    def normalize(self, p) -> np.ndarray:
        """Map anything with lat/lon/alt attributes into z-space."""
        return (np.array([p.lat, p.lon, p.alt]) - self.mean) / self.std


def fit_normalizer(graphs: Iterable[STGraph]) -> SceneNormalizer:
    """Mean/std of all node positions across the training graphs."""
    rows = [
        (s.lat, s.lon, s.alt)
        for g in graphs
        for frame in g.frames
        for s in frame.nodes.values()
    ]
    if not rows:
        raise ValueError("cannot fit a normalizer on empty graphs")
    arr = np.asarray(rows, dtype=np.float64)
    return SceneNormalizer(mean=arr.mean(axis=0), std=np.maximum(arr.std(axis=0), MIN_NORM_STD))


# ---------------------------------------------------------------------------
# parameters


@dataclass
class StructuralParams:
    """All trainable weights plus the coordinate normalizer.

    The attention-path tensors are None in the "no_attention" variant, whose
    node cell instead reads the raw node feature next to the temporal hidden
    and the summed spatial hiddens.
    """

    variant: str
    d_h: int
    d_embed: int
    d_e: int
    n_types: int
    weather_dim: int
    W_spatial_embed: Tensor  # (d_embed, EDGE_DIM)
    lstm_spatial: LstmWeights  # d_embed -> d_h
    W_temporal_embed: Tensor  # (d_embed, TEMPORAL_DIM)
    lstm_temporal: LstmWeights  # d_embed -> d_h
    W_node_embed: Tensor | None  # (d_embed, node_dim)
    W_attention_embed: Tensor | None  # (d_embed, 2 d_h)
    W_vv: Tensor | None  # (d_e, d_h) query projection
    W_v: Tensor | None  # (d_e, d_h) key projection
    lstm_node: LstmWeights  # input 2 d_embed, or node_dim + 2 d_h ablated
    W_p: Tensor  # (9, d_h) Gaussian head
    normalizer: SceneNormalizer

    @property
    def node_dim(self) -> int:
        return 3 + self.n_types + self.weather_dim

    @classmethod
    def init(
        cls,
        rng: np.random.Generator,
        normalizer: SceneNormalizer,
        *,
        d_h: int = DEFAULT_D_H,
        d_embed: int = DEFAULT_D_EMBED,
        d_e: int = DEFAULT_D_EMBED,
        n_types: int = 1,
        weather_dim: int = 0,
        variant: str = "attention",
    ) -> "StructuralParams":
        if variant not in VARIANTS:
            raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
        if min(d_h, d_embed, d_e) < 1:
            raise ValueError("hidden and embedding sizes must be positive")
        if n_types < 1 or weather_dim < 0:
            raise ValueError("need n_types >= 1 and weather_dim >= 0")
        node_dim = 3 + n_types + weather_dim

        W_spatial_embed = parameter(uniform_init(rng, (d_embed, EDGE_DIM), EDGE_DIM))
        lstm_spatial = LstmWeights.init(rng, d_embed, d_h)
        W_temporal_embed = parameter(uniform_init(rng, (d_embed, TEMPORAL_DIM), TEMPORAL_DIM))
        lstm_temporal = LstmWeights.init(rng, d_embed, d_h)
        if variant == "attention":
            W_node_embed = parameter(uniform_init(rng, (d_embed, node_dim), node_dim))
            W_attention_embed = parameter(uniform_init(rng, (d_embed, 2 * d_h), 2 * d_h))
            W_vv = parameter(uniform_init(rng, (d_e, d_h), d_h))
            W_v = parameter(uniform_init(rng, (d_e, d_h), d_h))
            lstm_node = LstmWeights.init(rng, 2 * d_embed, d_h)
        else:
            W_node_embed = W_attention_embed = W_vv = W_v = None
            lstm_node = LstmWeights.init(rng, node_dim + 2 * d_h, d_h)
        W_p = parameter(uniform_init(rng, (9, d_h), d_h))
        return cls(
            variant=variant,
            d_h=d_h,
            d_embed=d_embed,
            d_e=d_e,
            n_types=n_types,
            weather_dim=weather_dim,
            W_spatial_embed=W_spatial_embed,
            lstm_spatial=lstm_spatial,
            W_temporal_embed=W_temporal_embed,
            lstm_temporal=lstm_temporal,
            W_node_embed=W_node_embed,
            W_attention_embed=W_attention_embed,
            W_vv=W_vv,
            W_v=W_v,
            lstm_node=lstm_node,
            W_p=W_p,
            normalizer=normalizer,
        )

    def tensors(self) -> list[Tensor]:
        """Trainable tensors in a fixed order (optimizer and gradcheck list)."""
        out = [self.W_spatial_embed, *self.lstm_spatial.tensors()]
        out += [self.W_temporal_embed, *self.lstm_temporal.tensors()]
        if self.variant == "attention":
            out += [self.W_node_embed, self.W_attention_embed, self.W_vv, self.W_v]
        out += [*self.lstm_node.tensors(), self.W_p]
        return out

    def checkpoint_tensors(self) -> dict:
        named: dict = {
            "spatial/embed/W": self.W_spatial_embed,
            "spatial/lstm/W_x": self.lstm_spatial.W_x,
            "spatial/lstm/W_h": self.lstm_spatial.W_h,
            "spatial/lstm/b": self.lstm_spatial.b,
            "temporal/embed/W": self.W_temporal_embed,
            "temporal/lstm/W_x": self.lstm_temporal.W_x,
            "temporal/lstm/W_h": self.lstm_temporal.W_h,
            "temporal/lstm/b": self.lstm_temporal.b,
            "node/lstm/W_x": self.lstm_node.W_x,
            "node/lstm/W_h": self.lstm_node.W_h,
            "node/lstm/b": self.lstm_node.b,
            "head/W_p": self.W_p,
            "normalizer/mean": self.normalizer.mean,
            "normalizer/std": self.normalizer.std,
        }
        if self.variant == "attention":
            named["node/embed/W"] = self.W_node_embed
            named["attention/embed/W"] = self.W_attention_embed
            named["attention/W_vv"] = self.W_vv
            named["attention/W_v"] = self.W_v
        return named

    def hyperparameters(self) -> dict:
        return {
            "variant": self.variant,
            "d_h": self.d_h,
            "d_embed": self.d_embed,
            "d_e": self.d_e,
            "n_types": self.n_types,
            "weather_dim": self.weather_dim,
        }


def save_structural(path: str, params: StructuralParams, seed: int = 0) -> None:
    save_checkpoint(path, params.checkpoint_tensors(), seed, hyperparameters=params.hyperparameters())


def load_structural(path: str) -> tuple[StructuralParams, int]:
    """Rebuild model parameters from a checkpoint; returns (params, seed)."""
    arrays, seed, hp = load_checkpoint(path)
    for key in ("variant", "d_h", "d_embed", "d_e", "n_types", "weather_dim"):
        if key not in hp:
            raise ValueError(f"checkpoint is missing hyperparameter {key!r}: {path}")
    variant = hp["variant"]
    if variant not in VARIANTS:
        raise ValueError(f"checkpoint has unknown variant {variant!r}")

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

    normalizer = SceneNormalizer(mean=take("normalizer/mean"), std=take("normalizer/std"))
    params = StructuralParams(
        variant=variant,
        d_h=int(hp["d_h"]),
        d_embed=int(hp["d_embed"]),
        d_e=int(hp["d_e"]),
        n_types=int(hp["n_types"]),
        weather_dim=int(hp["weather_dim"]),
        W_spatial_embed=parameter(take("spatial/embed/W")),
        lstm_spatial=lstm("spatial/lstm"),
        W_temporal_embed=parameter(take("temporal/embed/W")),
        lstm_temporal=lstm("temporal/lstm"),
        W_node_embed=parameter(take("node/embed/W")) if variant == "attention" else None,
        W_attention_embed=parameter(take("attention/embed/W")) if variant == "attention" else None,
        W_vv=parameter(take("attention/W_vv")) if variant == "attention" else None,
        W_v=parameter(take("attention/W_v")) if variant == "attention" else None,
        lstm_node=lstm("node/lstm"),
        W_p=parameter(take("head/W_p")),
        normalizer=normalizer,
    )
    if arrays:
        raise ValueError(f"checkpoint has unexpected tensors {sorted(arrays)}: {path}")
    return params, seed


# ---------------------------------------------------------------------------
# features


def edge_vector(feat: EdgeFeature, scene_radius: float) -> np.ndarray:
    """Spatial edge feature: scaled distance, bearing as sin/cos, scaled dalt."""
    b = math.radians(feat.relative_bearing)
    return np.array(
        [
            feat.relative_distance / scene_radius,
            math.sin(b),
            math.cos(b),
            feat.altitude_delta / scene_radius,
        ]
    )


def temporal_vector(prev: NodeState, cur: NodeState, norm: SceneNormalizer, dt: float = STEP_S) -> np.ndarray:
    """Own-motion feature: z-space displacement plus 3-D speed."""
    dz = norm.normalize(cur) - norm.normalize(prev)
    speed = dist3d(prev.point(), cur.point()) / dt / SPEED_NORM_MPS
    return np.concatenate([dz, [speed]])


def node_vector(state: NodeState, params: StructuralParams) -> np.ndarray:
    """Node feature: z-space position, aircraft-type one-hot, local weather."""
    if not 0 <= state.type_code < params.n_types:
        raise ValueError(f"type_code {state.type_code} outside the {params.n_types} known types")
    if len(state.weather) != params.weather_dim:
        raise ValueError(
            f"node carries {len(state.weather)} weather values, model expects {params.weather_dim}"
        )
    onehot = np.zeros(params.n_types)
    onehot[state.type_code] = 1.0
    return np.concatenate([params.normalizer.normalize(state), onehot, np.asarray(state.weather, dtype=np.float64)])


# ---------------------------------------------------------------------------
# recurrent state


@dataclass
class ModelStateBank:
    """Recurrent state for live spatial edges, temporal edges, and nodes.

    Entries remember the frame that last wrote them; a state is reused while
    the gap stays within STATE_RETENTION_FRAMES and silently restarts from
    zeros otherwise, so a node appearing at t without history is not an
    error. ``attention_weights`` mirrors the latest per-node attention
    distribution for inspection.
    """

    d_h: int
    spatial: dict[EdgeKey, tuple[LstmState, int]] = field(default_factory=dict)
    temporal: dict[str, tuple[LstmState, int]] = field(default_factory=dict)
    node: dict[str, tuple[LstmState, int]] = field(default_factory=dict)
    attention_weights: dict[str, np.ndarray] = field(default_factory=dict)

    def recall(self, table: dict, key, t: int) -> LstmState:
        entry = table.get(key)
        if entry is not None and 0 <= t - entry[1] <= STATE_RETENTION_FRAMES:
            return entry[0]
        return LstmState.zeros(self.d_h)

    def prune(self, t: int) -> None:
        for table in (self.spatial, self.temporal, self.node):
            stale = [k for k, (_, seen) in table.items() if t - seen > STATE_RETENTION_FRAMES]
            for k in stale:
                del table[k]


# ---------------------------------------------------------------------------
# forward pass


def forward_frame(
    g: STGraph, t: int, params: StructuralParams, bank: ModelStateBank
) -> dict[str, GaussianParams3]:
    """Process frame t and emit each node's z-space Gaussian for frame t+1.

    Order per frame: step every spatial edge cell, step every temporal edge
    cell, then per node pool the incident spatial hiddens (attention or sum),
    step the node cell, and map its hidden through the Gaussian head.
    """
    if not 0 <= t < g.n_frames():
        raise IndexError(f"frame {t} outside graph with {g.n_frames()} frames")
    if bank.d_h != params.d_h:
        raise ValueError(f"state bank d_h {bank.d_h} does not match params d_h {params.d_h}")
    frame = g.frames[t]

    edges = g.spatial_edges[t]
    for key in sorted(edges):
        x = Tensor(edge_vector(edges[key], g.scene_radius))
        prior = bank.recall(bank.spatial, key, t)
        state = lstm_cell_step(embed(x, params.W_spatial_embed), prior, params.lstm_spatial)
        bank.spatial[key] = (state, t)

    for nid in frame.ids:
        ts = g.temporal_edges.get(nid)
        if ts and t in ts:
            x = Tensor(temporal_vector(g.frames[t - 1].nodes[nid], frame.nodes[nid], params.normalizer))
            prior = bank.recall(bank.temporal, nid, t)
            state = lstm_cell_step(embed(x, params.W_temporal_embed), prior, params.lstm_temporal)
            bank.temporal[nid] = (state, t)

    out: dict[str, GaussianParams3] = {}
    for nid in frame.ids:
        h_vv = bank.recall(bank.temporal, nid, t).h
        hiddens = [bank.spatial[key][0].h for key in incident_edges(g, nid, t)]
        x_v = Tensor(node_vector(frame.nodes[nid], params))
        if params.variant == "attention":
            if hiddens:
                weights, context = scaled_dot_attention(h_vv, hiddens, params.W_vv, params.W_v, params.d_e)
                bank.attention_weights[nid] = weights.values.copy()
            else:
                # isolated node: no social context, zero vector by convention
                context = Tensor(np.zeros(params.d_h))
                bank.attention_weights.pop(nid, None)
            a_v = embed(concat([h_vv, context]), params.W_attention_embed)
            e_v = embed(x_v, params.W_node_embed)
            node_input = concat([e_v, a_v])
        else:
            pooled = Tensor(np.zeros(params.d_h))
            for h in hiddens:
                pooled = pooled + h
            node_input = concat([x_v, h_vv, pooled])
        prior = bank.recall(bank.node, nid, t)
        state = lstm_cell_step(node_input, prior, params.lstm_node)
        bank.node[nid] = (state, t)
        out[nid] = gaussian3_from_linear(state.h, params.W_p)
    bank.prune(t)
    return out


# ---------------------------------------------------------------------------
# teacher-forced loss


def _validate_window(g: STGraph, t_obs: int, t_pred: int) -> None:
    if t_obs < 1:
        raise ValueError(f"observation window must cover at least 1 frame, got {t_obs}")
    if t_pred <= t_obs:
        raise ValueError(f"prediction end {t_pred} must exceed observation window {t_obs}")
    if t_pred > g.n_frames():
        raise ValueError(f"window needs {t_pred} frames but the graph has {g.n_frames()}")


def loss_term_count(g: STGraph, t_obs: int, t_pred: int) -> int:
    """Number of (node, step) terms nll_sequence_loss sums over."""
    _validate_window(g, t_obs, t_pred)
    n = 0
    for t in range(t_obs - 1, t_pred - 1):
        cur, nxt = g.frames[t].nodes, g.frames[t + 1].nodes
        n += sum(1 for nid in cur if nid in nxt)
    return n


def nll_sequence_loss(g: STGraph, params: StructuralParams, t_obs: int, t_pred: int) -> Tensor:
    """Sum of per-node Gaussian NLLs over prediction steps, teacher-forced.

    Frames are processed from the start so recurrent state warms up over the
    observation window; only predictions for frames after it are scored.
    Ground-truth positions feed all features. Nodes absent from the next
    frame contribute no term.
    """
    _validate_window(g, t_obs, t_pred)
    bank = ModelStateBank(params.d_h)
    total = Tensor(np.float64(0.0))
    for t in range(t_pred - 1):
        preds = forward_frame(g, t, params, bank)
        if t < t_obs - 1:
            continue
        truth = g.frames[t + 1].nodes
        for nid in sorted(preds):
            state = truth.get(nid)
            if state is not None:
                total = total + gaussian3_nll(preds[nid], params.normalizer.normalize(state))
    return total


def evaluate_nll(graphs: Sequence[STGraph], params: StructuralParams, t_obs: int) -> float:
    """Mean per-term NLL across full-length windows of the given graphs."""
    total = 0.0
    n = 0
    for g in graphs:
        total += nll_sequence_loss(g, params, t_obs, g.n_frames()).item()
        n += loss_term_count(g, t_obs, g.n_frames())
    if n == 0:
        raise ValueError("no scored steps in the evaluation graphs")
    return total / n


# ---------------------------------------------------------------------------
# training


class TrainingDiverged(ArithmeticError):
    """Training hit a non-finite loss or an unrepairable covariance."""


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer and model-size settings for one training run."""

    epochs: int
    lr: float = DEFAULT_LR
    clip: float = DEFAULT_CLIP
    seed: int = 0
    t_obs: int = DEFAULT_T_OBS
    d_h: int = DEFAULT_D_H
    d_embed: int = DEFAULT_D_EMBED
    d_e: int = DEFAULT_D_EMBED
    n_types: int = 1
    weather_dim: int = 0
    variant: str = "attention"

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError(f"epochs must be nonnegative: {self.epochs}")
        if self.lr <= 0.0 or self.clip <= 0.0:
            raise ValueError("lr and clip must be positive")
        if self.t_obs < 1:
            raise ValueError(f"t_obs must be at least 1: {self.t_obs}")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")


@dataclass(frozen=True)
class TrainReport:
    """Per-epoch loss curve; val_nll is empty when no validation set is given."""

    train_nll: tuple[float, ...]
    val_nll: tuple[float, ...]


def train(
    graphs: Sequence[STGraph],
    config: TrainConfig,
    val_graphs: Sequence[STGraph] = (),
) -> tuple[StructuralParams, TrainReport]:
    """Fit the model with Adam, one scene graph per optimizer step.

    Scene order is reshuffled every epoch from the seeded rng that also
    drew the initialization, so a fixed seed reproduces the run bit for
    bit. Per-scene losses are normalized by their term count to keep
    gradient scale independent of scene size. Raises TrainingDiverged when
    a loss goes non-finite.
    """
    graphs = list(graphs)
    val_graphs = list(val_graphs)
    if not graphs:
        raise ValueError("training needs at least one scene graph")
    for g in graphs + val_graphs:
        _validate_window(g, config.t_obs, g.n_frames())

    rng = np.random.default_rng(config.seed)
    params = StructuralParams.init(
        rng,
        fit_normalizer(graphs),
        d_h=config.d_h,
        d_embed=config.d_embed,
        d_e=config.d_e,
        n_types=config.n_types,
        weather_dim=config.weather_dim,
        variant=config.variant,
    )
    tensors = params.tensors()
    adam = AdamState.for_params(tensors)
    train_curve: list[float] = []
    val_curve: list[float] = []
    for epoch in range(config.epochs):
        order = rng.permutation(len(graphs))
        epoch_losses = []
        for idx in order:
            g = graphs[int(idx)]
            n_terms = max(loss_term_count(g, config.t_obs, g.n_frames()), 1)
            for p in tensors:
                p.zero_grad()
            try:
                loss = nll_sequence_loss(g, params, config.t_obs, g.n_frames()) * (1.0 / n_terms)
                value = loss.item()
                if not math.isfinite(value):
                    raise ArithmeticError(f"loss is {value}")
                loss.backward()
            except ArithmeticError as e:
                raise TrainingDiverged(
                    f"diverged at epoch {epoch}, scene {int(idx)} "
                    f"(last epoch means: {train_curve[-3:]}): {e}"
                ) from e
            clip_global_norm(tensors, config.clip)
            adam_step(tensors, adam, lr=config.lr)
            epoch_losses.append(value)
        train_curve.append(float(np.mean(epoch_losses)))
        if val_graphs:
            val_curve.append(evaluate_nll(val_graphs, params, config.t_obs))
    return params, TrainReport(train_nll=tuple(train_curve), val_nll=tuple(val_curve))


# ---------------------------------------------------------------------------
# closed-loop rollout


@dataclass(frozen=True)
class PredictedStep:
    """One node's forecast for one future frame, in physical units."""

    t: int  # frame index of the predicted position
    mu: np.ndarray  # (3,) lat deg, lon deg, alt m
    sigma: np.ndarray  # (3,) after any sigma scaling
    rho: np.ndarray  # (3,) pairwise correlations
    point: GeoPoint  # the sampled (possibly gated) position
    report: InferReport


@dataclass(frozen=True)
class TrajectoryPrediction:
    """Sampled forecast tracks plus the per-step distributions behind them."""

    t_obs: int
    horizon: int
    step_s: float
    origins: dict[str, GeoPoint]  # last observed position per node
    steps: dict[str, tuple[PredictedStep, ...]]

    @property
    def ids(self) -> list[str]:
        return sorted(self.steps)

    def sampled_track(self, node_id: str) -> list[GeoPoint]:
        return [s.point for s in self.steps[node_id]]

    def write_csv(self, path: str) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(
                [
                    "node_id",
                    "t",
                    "mu_lat",
                    "mu_lon",
                    "mu_alt_m",
                    "sigma_lat",
                    "sigma_lon",
                    "sigma_alt_m",
                    "rho_lat_lon",
                    "rho_lat_alt",
                    "rho_lon_alt",
                    "sample_lat",
                    "sample_lon",
                    "sample_alt_m",
                ]
            )
            for nid in self.ids:
                for s in self.steps[nid]:
                    values = [*s.mu, *s.sigma, *s.rho, s.point.lat, s.point.lon, s.point.alt]
                    w.writerow([nid, s.t, *[repr(float(v)) for v in values]])

    def write_geojson(self, path: str) -> None:
        """One LineString per node, from the last observed position onward."""
        features = []
        for nid in self.ids:
            origin = self.origins[nid]
            coords = [[origin.lon, origin.lat, origin.alt]]
            coords += [[s.point.lon, s.point.lat, s.point.alt] for s in self.steps[nid]]
            features.append(
                {
                    "type": "Feature",
                    "properties": {"node_id": nid, "t_obs": self.t_obs, "step_s": self.step_s},
                    "geometry": {"type": "LineString", "coordinates": coords},
                }
            )
        with open(path, "w") as f:
            json.dump({"type": "FeatureCollection", "features": features}, f, sort_keys=True, separators=(",", ":"))


def _phase_of(phases, nid: str) -> str:
    if isinstance(phases, str):
        return phases
    try:
        return phases[nid]
    except KeyError:
        raise ValueError(f"no phase given for node {nid!r}") from None


def _scaled_physical(dist_z: GaussianParams3, norm: SceneNormalizer, sigma_scale: float) -> GaussianParams3:
    """Denormalize a z-space Gaussian and scale its spread for sampling."""
    phys = gaussian3_shift_scale(dist_z, shift=norm.mean, scale=norm.std)
    sigma = np.maximum(phys.sigma.values * sigma_scale, SIGMA_FLOOR)
    return GaussianParams3(
        mu=Tensor(phys.mu.values.copy()),
        sigma=Tensor(sigma),
        rho=Tensor(phys.rho.values.copy()),
    )


def rollout(
    g_obs: STGraph,
    params: StructuralParams,
    horizon: int,
    rng: np.random.Generator,
    constraints: ConstraintSet | None = None,
    phases: str | Mapping[str, str] = ENROUTE,
    sigma_scale: float = 1.0,
    dt: float = STEP_S,
) -> TrajectoryPrediction:
    """Closed-loop forecast for every node in the last observed frame.

    Each future step samples all nodes' next positions from their predicted
    Gaussians (optionally gated by fitted motion limits via infer_step),
    assembles them into a new scene frame, and feeds that frame back through
    the model. ``phases`` is one phase string for all nodes or a mapping per
    node id; ``sigma_scale`` shrinks or widens the sampled spread, with ~0
    collapsing the rollout onto the iterated means.
    """
    if rng is None:
        raise ValueError("rollout requires an rng")
    if horizon < 0:
        raise ValueError(f"horizon must be nonnegative: {horizon}")
    if sigma_scale < 0.0:
        raise ValueError(f"sigma_scale must be nonnegative: {sigma_scale}")

    t_obs = g_obs.n_frames()
    last = g_obs.frames[-1]
    ids = last.ids
    origins = {nid: last.nodes[nid].point() for nid in ids}
    if horizon == 0:
        return TrajectoryPrediction(t_obs, 0, dt, origins, {nid: () for nid in ids})

    bank = ModelStateBank(params.d_h)
    preds: dict[str, GaussianParams3] = {}
    for t in range(t_obs):
        preds = forward_frame(g_obs, t, params, bank)

    headings: dict[str, float | None] = {}
    for nid in ids:
        headings[nid] = None
        if t_obs >= 2 and nid in g_obs.frames[-2].nodes:
            a = g_obs.frames[-2].nodes[nid].point()
            b = origins[nid]
            if haversine(a, b) > 0.0:
                headings[nid] = initial_bearing(a, b)

    work = STGraph(
        frames=list(g_obs.frames),
        spatial_edges=[dict(d) for d in g_obs.spatial_edges],
        temporal_edges={k: list(v) for k, v in g_obs.temporal_edges.items()},
        scene_radius=g_obs.scene_radius,
    )
    steps: dict[str, list[PredictedStep]] = {nid: [] for nid in ids}
    for k in range(horizon):
        t_new = t_obs + k
        prev_frame = work.frames[-1]
        new_states: dict[str, NodeState] = {}
        for nid in ids:
            dist = _scaled_physical(preds[nid], params.normalizer, sigma_scale)
            prev = prev_frame.nodes[nid]
            point, report = infer_step(
                dist, prev.point(), _phase_of(phases, nid), constraints, rng, dt, headings[nid]
            )
            if haversine(prev.point(), point) > 0.0:
                headings[nid] = initial_bearing(prev.point(), point)
            steps[nid].append(
                PredictedStep(
                    t=t_new,
                    mu=dist.mu.values.copy(),
                    sigma=dist.sigma.values.copy(),
                    rho=dist.rho.values.copy(),
                    point=point,
                    report=report,
                )
            )
            new_states[nid] = NodeState(
                lat=point.lat, lon=point.lon, alt=point.alt, type_code=prev.type_code, weather=prev.weather
            )
        frame = SceneFrame(t_new, new_states)
        work.frames.append(frame)
        work.spatial_edges.append(spatial_pairs(frame, work.scene_radius))
        for nid in ids:
            work.temporal_edges.setdefault(nid, []).append(t_new)
        preds = forward_frame(work, t_new, params, bank)
    return TrajectoryPrediction(t_obs, horizon, dt, origins, {nid: tuple(v) for nid, v in steps.items()})
