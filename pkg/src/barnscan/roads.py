"""Exact polygon-to-road distances at scale.

Each road edge is split into pieces no longer than ``d`` and the resulting
nodes go into a k-d tree. A polygon only needs exact segment distances
against edges that own a node near its centroid. The candidate radius starts
at ``2 d`` (doubled until something is found), and a second query at
``best + reach + d`` makes the answer exact even when the nearest road is far
away or the polygon is large; ``reach`` is the polygon's farthest vertex from
its centroid.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.spatial import cKDTree

from .geometry import open_ring, points_in_ring, ring_centroid, segment_segment_distance
from .objects import DetectedObject

__all__ = [
    "RoadNetwork",
    "RoadIndex",
    "split_edges",
    "build_index",
    "nearest_road_distance",
    "annotate_road_distance",
    "brute_force_distance",
    "read_roads",
]

log = logging.getLogger(__name__)

DEFAULT_SPLIT_LENGTH = 100.0


@dataclass
class RoadNetwork:
    edges: list[np.ndarray]  # one (k, 2) polyline per edge, meters
    edge_ids: list[str]
    tile_id: str = ""

    def __post_init__(self):
        if len(self.edges) != len(self.edge_ids):
            raise ValueError("edges and edge_ids differ in length")
        cleaned = []
        for eid, line in zip(self.edge_ids, self.edges):
            line = np.asarray(line, dtype=float).reshape(-1, 2)
            keep = np.r_[True, np.any(np.diff(line, axis=0) != 0, axis=1)]
            line = line[keep]
            if len(line) < 2:
                raise ValueError(f"road edge {eid!r} has fewer than 2 distinct vertices")
            cleaned.append(line)
        self.edges = cleaned

    def __len__(self):
        return len(self.edges)

    @classmethod
    def from_lines(cls, lines: Sequence, tile_id: str = "") -> "RoadNetwork":
        return cls(list(lines), [str(k) for k in range(len(lines))], tile_id)


@dataclass
class RoadIndex:
    split_length: float
    nodes: np.ndarray  # (n, 2)
    node_edge: np.ndarray  # (n,) index into the network's edges
    tree: cKDTree | None = None

    def radius(self, point, r: float) -> np.ndarray:
        """Indices of nodes within ``r`` of ``point`` (inclusive), sorted."""
        return np.sort(np.asarray(self.tree.query_ball_point(point, r), dtype=np.int64))

    def nearest(self, point, k: int = 1):
        dist, idx = self.tree.query(point, k=k)
        return dist, idx


def _split_polyline(line: np.ndarray, d: float) -> np.ndarray:
    seg = np.hypot(*np.diff(line, axis=0).T)
    arc = np.r_[0.0, np.cumsum(seg)]
    total = arc[-1]
    count = 2 + math.floor(total / d)
    stops = np.linspace(0.0, total, count)
    x = np.interp(stops, arc, line[:, 0])
    y = np.interp(stops, arc, line[:, 1])
    return np.column_stack([x, y])


def split_edges(net: RoadNetwork, d: float = DEFAULT_SPLIT_LENGTH) -> RoadIndex:
    """Evenly spaced nodes along every edge: ``2 + floor(D / d)`` for an edge of length D."""
    if not d > 0:
        raise ValueError(f"split length must be positive, got {d}")
    parts = [_split_polyline(line, d) for line in net.edges]
    if parts:
        nodes = np.vstack(parts)
        owner = np.repeat(np.arange(len(parts)), [len(p) for p in parts])
    else:
        nodes = np.empty((0, 2))
        owner = np.empty(0, dtype=np.int64)
    return RoadIndex(float(d), nodes, owner)


def build_index(index: RoadIndex) -> RoadIndex:
    """Attach a k-d tree over the split nodes."""
    if len(index.nodes) == 0:
        raise ValueError("cannot index an empty node list")
    index.tree = cKDTree(index.nodes)
    return index


def _segments(net: RoadNetwork):
    """Flattened road segments ``(a, b, owner edge)``, cached on the network."""
    cached = getattr(net, "_segment_cache", None)
    if cached is None:
        a = np.vstack([line[:-1] for line in net.edges])
        b = np.vstack([line[1:] for line in net.edges])
        owner = np.repeat(np.arange(len(net.edges)), [len(line) - 1 for line in net.edges])
        starts = np.r_[0, np.cumsum([len(line) - 1 for line in net.edges])[:-1]]
        cached = (a, b, owner, starts)
        net._segment_cache = cached
    return cached


def _best_edge(ring, net: RoadNetwork, candidates) -> tuple[float, int]:
    """Smallest polygon-to-edge distance over ``candidates``; ties go to the lowest edge index."""
    candidates = np.unique(np.asarray(candidates, dtype=np.int64))
    if len(candidates) == 0:
        return math.inf, -1
    seg_a, seg_b, owner, starts = _segments(net)
    take = np.isin(owner, candidates)
    a, b, own = seg_a[take], seg_b[take], owner[take]
    pa = open_ring(ring)
    pb = np.roll(pa, -1, axis=0)
    per_seg = segment_segment_distance(pa[:, None], pb[:, None], a[None], b[None]).min(axis=0)
    # an edge lying wholly inside the polygon crosses no boundary segment
    inside = points_in_ring(seg_a[starts[candidates]], pa)
    dist = np.full(len(candidates), math.inf)
    np.minimum.at(dist, np.searchsorted(candidates, own), per_seg)
    dist[inside] = 0.0
    k = int(np.argmin(dist))
    return float(dist[k]), int(candidates[k])


def nearest_road_distance(obj, idx: RoadIndex | None, net: RoadNetwork) -> tuple[float, str | None]:
    """Exact distance (meters) from an object's polygon to the nearest road edge.

    ``obj`` may be a :class:`DetectedObject` or a bare ring. Returns
    ``(inf, None)`` for an empty network.
    """
    ring = open_ring(obj.polygon if isinstance(obj, DetectedObject) else obj)
    if len(net) == 0 or idx is None or len(idx.nodes) == 0:
        return math.inf, None
    if idx.tree is None:
        build_index(idx)
    d = idx.split_length
    centroid = ring_centroid(ring)
    reach = float(np.hypot(*(ring - centroid).T).max())

    # no node can be farther than this from the centroid
    span = float(np.hypot(*(np.abs(idx.nodes - centroid).max(axis=0))))
    r = 2.0 * d
    hits = idx.radius(centroid, r)
    while len(hits) == 0:
        r = min(2.0 * r, span + d)
        hits = idx.radius(centroid, r)
    seen = np.unique(idx.node_edge[hits])
    best, best_edge = _best_edge(ring, net, seen)

    # every point of an edge is within d/2 of one of its nodes, so the true
    # nearest edge owns a node within best + reach + d/2 of the centroid
    r_final = best + reach + d
    if r_final > r:
        more = np.setdiff1d(np.unique(idx.node_edge[idx.radius(centroid, r_final)]), seen)
        if len(more):
            cand, cand_edge = _best_edge(ring, net, more)
            if cand < best or (cand == best and cand_edge < best_edge):
                best, best_edge = cand, cand_edge
    return best, net.edge_ids[best_edge]


def brute_force_distance(obj, net: RoadNetwork) -> tuple[float, str | None]:
    """O(N·M) reference: distance to every edge."""
    ring = open_ring(obj.polygon if isinstance(obj, DetectedObject) else obj)
    if len(net) == 0:
        return math.inf, None
    best, best_edge = _best_edge(ring, net, range(len(net)))
    return best, net.edge_ids[best_edge]


def annotate_road_distance(
    objs: Sequence[DetectedObject], net: RoadNetwork | None, d: float = DEFAULT_SPLIT_LENGTH
) -> list[DetectedObject]:
    """Fill ``road_distance``/``road_edge`` in place for every object of one tile."""
    if net is None or len(net) == 0:
        for obj in objs:
            obj.road_distance, obj.road_edge = math.inf, None
        return list(objs)
    idx = build_index(split_edges(net, d))
    for obj in objs:
        obj.road_distance, obj.road_edge = nearest_road_distance(obj, idx, net)
    return list(objs)


def read_roads(path, tile_id: str | None = None) -> RoadNetwork:
    """Load a ``<tile-id>.roads.geojson`` FeatureCollection of LineStrings.

    MultiLineString parts become separate edges sharing the feature id with a
    ``#k`` suffix.
    """
    path = Path(path)
    data = json.loads(path.read_text())
    if tile_id is None:
        tile_id = path.name.removesuffix(".roads.geojson")
    lines, ids = [], []
    for k, feat in enumerate(data.get("features", [])):
        geom = feat.get("geometry") or {}
        props = feat.get("properties") or {}
        fid = feat.get("id", props.get("id", props.get("osmid", k)))
        kind = geom.get("type")
        if kind == "LineString":
            lines.append(geom["coordinates"])
            ids.append(str(fid))
        elif kind == "MultiLineString":
            for j, part in enumerate(geom["coordinates"]):
                lines.append(part)
                ids.append(f"{fid}#{j}")
        else:
            raise ValueError(f"{path}: feature {k} has unsupported geometry {kind!r}")
    return RoadNetwork(lines, ids, tile_id)
