"""Spatio-temporal scene graphs over aircraft tracks.

Nodes are aircraft present in a frame; spatial edges join co-present
aircraft within a scene radius; temporal edges join the same aircraft
across consecutive frames. All spatial edges share one factor identity and
all temporal edges another, so downstream models keep a fixed parameter
count regardless of traffic density.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .constraints import GeoPoint, dist3d, haversine, initial_bearing

DEFAULT_SCENE_RADIUS_M = 18_520.0  # 10 NM

SPATIAL_FACTOR = "spatial"
TEMPORAL_FACTOR = "temporal"


@dataclass(frozen=True)
class NodeState:
    """One aircraft's state within a frame; physical units (deg, deg, m)."""

    lat: float
    lon: float
    alt: float
    type_code: int = 0
    weather: tuple[float, ...] = ()

    def point(self) -> GeoPoint:
        return GeoPoint(self.lat, self.lon, self.alt)


@dataclass(frozen=True)
class EdgeFeature:
    """Relative geometry of a pair, oriented lower node id -> higher id."""

    relative_distance: float  # m; great-circle combined with altitude delta
    relative_bearing: float  # deg in [0, 360)
    altitude_delta: float  # m, signed

    def __post_init__(self):
        if self.relative_distance < 0.0:
            raise ValueError("relative_distance must be nonnegative")
        if not 0.0 <= self.relative_bearing < 360.0:
            raise ValueError(f"bearing out of [0, 360): {self.relative_bearing}")


def edge_feature(a: NodeState, b: NodeState) -> EdgeFeature:
    """Relative distance/bearing/altitude from a to b.

    Distance is symmetric; the bearing of a pair with identical horizontal
    positions is 0 by convention.
    """
    pa, pb = a.point(), b.point()
    return EdgeFeature(
        relative_distance=dist3d(pa, pb),
        relative_bearing=initial_bearing(pa, pb),
        altitude_delta=b.alt - a.alt,
    )


@dataclass(frozen=True)
class SceneFrame:
    """All aircraft states at one 10-second step."""

    t: int
    nodes: dict[str, NodeState]

    def __post_init__(self):
        if self.t < 0:
            raise ValueError(f"frame index must be nonnegative: {self.t}")
        for nid, state in self.nodes.items():
            if not (
                math.isfinite(state.lat) and math.isfinite(state.lon) and math.isfinite(state.alt)
            ):
                raise ValueError(f"non-finite state for {nid!r} at t={self.t}")

    @property
    def ids(self) -> list[str]:
        return sorted(self.nodes)


EdgeKey = tuple[str, str]  # sorted pair


def spatial_pairs(frame: SceneFrame, scene_radius: float) -> dict[EdgeKey, EdgeFeature]:
    """All unordered co-present pairs within the horizontal scene radius."""
    ids = frame.ids
    edges: dict[EdgeKey, EdgeFeature] = {}
    for i, u in enumerate(ids):
        for v in ids[i + 1 :]:
            a, b = frame.nodes[u], frame.nodes[v]
            if haversine(a.point(), b.point()) <= scene_radius:
                edges[(u, v)] = edge_feature(a, b)
    return edges


@dataclass
class STGraph:
    """An unrolled spatio-temporal graph over consecutive frames."""

    frames: list[SceneFrame]
    spatial_edges: list[dict[EdgeKey, EdgeFeature]]  # one dict per frame
    temporal_edges: dict[str, list[int]]  # id -> frame indices t with an edge (t-1, t)
    scene_radius: float

    @property
    def factor_map(self) -> dict:
        """Every edge mapped to its shared factor; exactly two identities."""
        out = {}
        for t, edges in enumerate(self.spatial_edges):
            for key in edges:
                out[("s", t, key)] = SPATIAL_FACTOR
        for nid, ts in self.temporal_edges.items():
            for t in ts:
                out[("t", t, nid)] = TEMPORAL_FACTOR
        return out

    def n_frames(self) -> int:
        return len(self.frames)

    def ids(self) -> list[str]:
        seen = set()
        for f in self.frames:
            seen.update(f.nodes)
        return sorted(seen)


def build_st_graph(frames: list[SceneFrame], scene_radius: float = DEFAULT_SCENE_RADIUS_M) -> STGraph:
    """Assemble the graph; frames must be time-ordered with consecutive indices."""
    if not frames:
        raise ValueError("need at least one frame")
    for prev, cur in zip(frames, frames[1:]):
        if cur.t != prev.t + 1:
            raise ValueError(f"frames not consecutive: t={prev.t} followed by t={cur.t}")
    spatial = [spatial_pairs(f, scene_radius) for f in frames]
    temporal: dict[str, list[int]] = {}
    for k in range(1, len(frames)):
        present_now = frames[k].nodes.keys()
        present_before = frames[k - 1].nodes.keys()
        for nid in sorted(present_now & present_before):
            temporal.setdefault(nid, []).append(k)
    return STGraph(frames=frames, spatial_edges=spatial, temporal_edges=temporal, scene_radius=scene_radius)


def node_degree(g: STGraph, node_id: str, t: int) -> int:
    """Number of spatial edges incident to a node in frame t."""
    if not 0 <= t < len(g.frames):
        raise ValueError(f"frame index out of range: {t}")
    if node_id not in g.frames[t].nodes:
        raise ValueError(f"node {node_id!r} absent at t={t}")
    return sum(1 for key in g.spatial_edges[t] if node_id in key)


def incident_edges(g: STGraph, node_id: str, t: int) -> list[EdgeKey]:
    """Sorted spatial edge keys touching a node in frame t."""
    return sorted(key for key in g.spatial_edges[t] if node_id in key)


def dump_st_graph(g: STGraph) -> str:
    """Line-oriented text dump of the unrolled graph, for golden tests."""
    lines = [f"stgraph frames={len(g.frames)} radius_m={g.scene_radius!r}"]
    for t, frame in enumerate(g.frames):
        lines.append(f"frame {t}: nodes={','.join(frame.ids)}")
        for (u, v), feat in sorted(g.spatial_edges[t].items()):
            lines.append(
                f"  spatial {u}-{v} dist_m={feat.relative_distance:.3f}"
                f" bearing_deg={feat.relative_bearing:.3f} dalt_m={feat.altitude_delta:.3f}"
            )
        for nid in sorted(g.temporal_edges):
            if t in g.temporal_edges[nid]:
                lines.append(f"  temporal {nid} {t - 1}->{t}")
    return "\n".join(lines) + "\n"


def flights_to_frames(
    tracks: dict[str, list],
    type_codes: dict[str, int] | None = None,
    weather: dict[str, list[tuple[float, ...]]] | None = None,
) -> list[SceneFrame]:
    """Build frames from per-flight point lists aligned on a shared 10 s grid.

    ``tracks`` maps flight id to a list of objects with lat/lon/alt (m)
    attributes, one entry per step, None for steps where the flight is
    absent. All lists must share one length.
    """
    lengths = {len(seq) for seq in tracks.values()}
    if len(lengths) != 1:
        raise ValueError("all tracks must cover the same frame range")
    n = lengths.pop()
    frames = []
    for t in range(n):
        nodes = {}
        for fid in sorted(tracks):
            p = tracks[fid][t]
            if p is None:
                continue
            wx = tuple(weather[fid][t]) if weather and fid in weather else ()
            nodes[fid] = NodeState(
                lat=p.lat,
                lon=p.lon,
                alt=p.alt,
                type_code=(type_codes or {}).get(fid, 0),
                weather=wx,
            )
        frames.append(SceneFrame(t=t, nodes=nodes))
    return frames
