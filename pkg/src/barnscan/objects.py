"""Turn a probability raster into polygon objects with shape features.

threshold -> connected_components (4-neighbourhood) -> trace_polygon ->
min_rotated_rect -> object_features. :func:`extract_objects` chains them.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy import ndimage

from .geometry import close_ring, convex_hull
from .raster import Geotransform, RasterTile, atomic_write_bytes

__all__ = [
    "DegenerateGeometryError",
    "ConnectedComponent",
    "MinRotatedRect",
    "DetectedObject",
    "threshold",
    "connected_components",
    "trace_polygon",
    "min_rotated_rect",
    "object_features",
    "extract_objects",
    "objects_to_geojson",
    "write_geojson",
    "read_geojson",
]

FOUR_CONNECTED = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]])


class DegenerateGeometryError(ValueError):
    """Input collapses to a point or a line, so no rectangle has positive area."""


@dataclass
class ConnectedComponent:
    pixels: np.ndarray  # (n, 2) int (row, col), row-major order
    tile_id: str = ""
    bbox: tuple[int, int, int, int] = (0, 0, 0, 0)  # min_row, min_col, max_row, max_col (inclusive)

    @property
    def size(self) -> int:
        return len(self.pixels)


@dataclass(frozen=True)
class MinRotatedRect:
    center: tuple[float, float]
    long_side: float
    short_side: float
    angle: float  # degrees of the long side, CCW from east, in [0, 180)

    @property
    def area(self) -> float:
        return self.long_side * self.short_side

    @property
    def aspect_ratio(self) -> float:
        return self.long_side / self.short_side

    def corners(self) -> np.ndarray:
        t = math.radians(self.angle)
        u = np.array([math.cos(t), math.sin(t)]) * self.long_side / 2
        v = np.array([-math.sin(t), math.cos(t)]) * self.short_side / 2
        c = np.asarray(self.center)
        return np.array([c - u - v, c + u - v, c + u + v, c - u + v])


@dataclass
class DetectedObject:
    polygon: np.ndarray  # closed exterior ring, projected meters
    area: float
    aspect_ratio: float
    orientation: float
    mean_probability: float
    year: int | None = None
    road_distance: float | None = None
    road_edge: str | None = None
    tile_id: str = ""
    object_id: str = ""
    pixels: np.ndarray | None = field(default=None, repr=False)

    @property
    def features(self) -> tuple[float, float, float | None]:
        return self.area, self.aspect_ratio, self.road_distance


def threshold(prob: RasterTile, tau: float = 0.5) -> RasterTile:
    """Binary mask of pixels with ``prob >= tau``."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"threshold {tau} outside [0, 1]")
    # compare in float64 so a tiny tau does not round to 0 in float32
    mask = (prob.band.astype(np.float64) >= tau).astype(np.uint8)
    return RasterTile(mask, prob.geo, prob.timestamp)


def connected_components(mask: RasterTile | np.ndarray, tile_id: str = "") -> list[ConnectedComponent]:
    """4-connected components, ordered by (min row, min col)."""
    arr = mask.band if isinstance(mask, RasterTile) else np.asarray(mask)
    labels, n = ndimage.label(arr > 0, structure=FOUR_CONNECTED)
    if n == 0:
        return []
    width = labels.shape[1]
    flat = labels.ravel()
    idx = np.flatnonzero(flat)
    # stable sort by label keeps each component's pixels in raster order
    idx = idx[np.argsort(flat[idx], kind="stable")]
    rows, cols = np.divmod(idx, width)
    counts = np.bincount(flat[idx], minlength=n + 1)[1:]
    starts = np.r_[0, np.cumsum(counts)[:-1]]
    ends = starts + counts - 1
    min_row, max_row = rows[starts], rows[ends]
    min_col = np.minimum.reduceat(cols, starts)
    max_col = np.maximum.reduceat(cols, starts)
    pixels = np.column_stack([rows, cols]).astype(np.int64)
    comps = []
    for k in np.lexsort((min_col, min_row)).tolist():
        bbox = (int(min_row[k]), int(min_col[k]), int(max_row[k]), int(max_col[k]))
        comps.append(ConnectedComponent(pixels[starts[k] : ends[k] + 1], tile_id, bbox))
    return comps


# Boundary directions in the geographic frame (x east, y north): E, N, W, S.
# Stored as (d_row, d_col) steps on the pixel-corner lattice.
_STEPS = ((0, 1), (-1, 0), (0, -1), (1, 0))


def _component_mask(comp: ConnectedComponent):
    r0, c0, r1, c1 = comp.bbox
    local = np.zeros((r1 - r0 + 3, c1 - c0 + 3), dtype=bool)
    local[comp.pixels[:, 0] - r0 + 1, comp.pixels[:, 1] - c0 + 1] = True
    return local, r0 - 1, c0 - 1


def _trace_corners(comp: ConnectedComponent) -> np.ndarray:
    """Outer boundary as integer (row, col) corners, counter-clockwise on the map."""
    m, row_off, col_off = _component_mask(comp)
    inner = m[1:-1, 1:-1]
    rr, cc = np.nonzero(inner)
    rr = rr + 1
    cc = cc + 1
    outgoing: dict[tuple[int, int], list[int]] = {}

    def add(rows, cols, direction):
        for r, c in zip(rows.tolist(), cols.tolist()):
            outgoing.setdefault((r, c), []).append(direction)

    # interior kept on the left of every directed edge
    below = ~m[rr + 1, cc]
    add(rr[below] + 1, cc[below], 0)  # bottom edge heads east
    right = ~m[rr, cc + 1]
    add(rr[right] + 1, cc[right] + 1, 1)  # right edge heads north
    above = ~m[rr - 1, cc]
    add(rr[above], cc[above] + 1, 2)  # top edge heads west
    left = ~m[rr, cc - 1]
    add(rr[left], cc[left], 3)  # left edge heads south

    # top edge of the first pixel in raster order lies on the outer boundary
    start = (int(rr[0]), int(cc[0]) + 1)
    start_dir = 2
    vertex, direction = start, start_dir
    corners = []
    prev_dir = None
    while True:
        if direction != prev_dir:
            corners.append(vertex)
        dr, dc = _STEPS[direction]
        vertex = (vertex[0] + dr, vertex[1] + dc)
        prev_dir = direction
        options = outgoing[vertex]
        if len(options) == 1:
            direction = options[0]
        else:
            # pinch vertex: diagonal pixels are not 4-connected, so keep turning left
            left_turn = (prev_dir + 1) % 4
            direction = left_turn if left_turn in options else options[0]
        if vertex == start and direction == start_dir:
            break
    if prev_dir == start_dir and corners[0] == start:
        # start vertex sits mid-way along a straight run
        corners = corners[1:]
    corners = np.array(corners, dtype=np.int64)
    corners[:, 0] += row_off
    corners[:, 1] += col_off
    return corners


def trace_polygon(comp: ConnectedComponent, geo: Geotransform | None = None) -> np.ndarray:
    """Closed exterior ring following the component's outer pixel edges.

    Vertices are in projected meters, counter-clockwise, with collinear
    vertices dropped. Holes are not emitted.
    """
    if comp.size == 0:
        raise ValueError("empty component")
    geo = geo or Geotransform()
    corners = _trace_corners(comp)
    x, y = geo.to_geo(corners[:, 0], corners[:, 1])
    return close_ring(np.column_stack([x, y]))


def _rect_from_hull(hull: np.ndarray) -> MinRotatedRect:
    """Rotating calipers over a counter-clockwise convex hull.

    For each hull edge the rectangle flush with that edge is measured with
    three antipodal pointers (max along the edge, min along the edge, max
    height), each of which only ever advances.
    """
    h = len(hull)
    if h < 3:
        raise DegenerateGeometryError("polygon has fewer than 3 non-collinear vertices")
    pts = hull.astype(float)
    edges = np.roll(pts, -1, axis=0) - pts
    lengths = np.hypot(edges[:, 0], edges[:, 1])
    units = edges / lengths[:, None]
    normals = np.column_stack([-units[:, 1], units[:, 0]])

    def along(idx, i):
        return pts[idx % h] @ units[i]

    def height(idx, i):
        return (pts[idx % h] - pts[i]) @ normals[i]

    u0 = pts @ units[0]
    far = int(np.argmax(u0))
    near = int(np.argmin(u0))
    top = int(np.argmax((pts - pts[0]) @ normals[0]))

    best = None
    for i in range(h):
        for _ in range(h):
            if along(far + 1, i) >= along(far, i):
                far += 1
            else:
                break
        for _ in range(h):
            if height(top + 1, i) >= height(top, i):
                top += 1
            else:
                break
        for _ in range(h):
            if along(near + 1, i) <= along(near, i):
                near += 1
            else:
                break
        lo, hi = along(near, i), along(far, i)
        width = hi - lo
        tall = height(top, i)
        area = width * tall
        if best is None or area < best[0]:
            best = (area, i, lo, hi, tall)

    area, i, lo, hi, tall = best
    if not area > 0:
        raise DegenerateGeometryError("collinear input yields a zero-width rectangle")
    u, n = units[i], normals[i]
    center = u * (lo + hi) / 2 + n * (pts[i] @ n + tall / 2)
    width = hi - lo
    if width >= tall:
        long_side, short_side, axis = width, tall, u
    else:
        long_side, short_side, axis = tall, width, n
    angle = math.degrees(math.atan2(axis[1], axis[0])) % 180.0
    if angle >= 180.0 - 1e-9:
        angle = 0.0
    return MinRotatedRect((float(center[0]), float(center[1])), float(long_side), float(short_side), angle)


def min_rotated_rect(ring) -> MinRotatedRect:
    """Smallest-area enclosing rectangle, flush with one convex-hull edge."""
    pts = np.asarray(ring)
    if len(np.unique(pts, axis=0)) < 3:
        raise DegenerateGeometryError("need at least 3 distinct vertices")
    return _rect_from_hull(convex_hull(pts))


def _corner_hull(comp: ConnectedComponent) -> np.ndarray:
    """Convex hull of the component's pixel corners, exact in integer (row, col)."""
    rows, cols = comp.pixels[:, 0], comp.pixels[:, 1]
    order = np.lexsort((cols, rows))
    rows, cols = rows[order], cols[order]
    starts = np.r_[0, np.flatnonzero(np.diff(rows)) + 1]
    ends = np.r_[starts[1:], len(rows)] - 1
    r = rows[starts]
    cmin, cmax = cols[starts], cols[ends] + 1
    corners = np.concatenate(
        [np.column_stack([r, cmin]), np.column_stack([r + 1, cmin]),
         np.column_stack([r, cmax]), np.column_stack([r + 1, cmax])]
    )
    # (row, col) is a mirror image of the map frame; hull in (col, -row) keeps CCW
    return convex_hull(np.column_stack([corners[:, 1], -corners[:, 0]]))


def object_features(
    comp: ConnectedComponent,
    ring: np.ndarray,
    prob: RasterTile,
    object_id: str = "",
) -> DetectedObject:
    """Area, aspect ratio and orientation of the minimum rotated rectangle, plus mean probability."""
    hull = _corner_hull(comp)
    geo = prob.geo
    # map (col, -row) lattice to meters; positive scaling keeps the hull convex and CCW
    hull_xy = np.column_stack(
        [geo.origin_x + hull[:, 0] * geo.pixel_width, geo.origin_y + hull[:, 1] * geo.pixel_height]
    )
    rect = _rect_from_hull(hull_xy)
    values = prob.band[comp.pixels[:, 0], comp.pixels[:, 1]].astype(np.float64)
    return DetectedObject(
        polygon=np.asarray(ring, dtype=float),
        area=rect.area,
        aspect_ratio=rect.aspect_ratio,
        orientation=rect.angle,
        mean_probability=float(values.mean()),
        year=prob.timestamp,
        tile_id=comp.tile_id,
        object_id=object_id,
        pixels=comp.pixels,
    )


def extract_objects(prob: RasterTile, tau: float = 0.5, tile_id: str = "") -> list[DetectedObject]:
    """threshold + components + polygons + features for one tile."""
    comps = connected_components(threshold(prob, tau), tile_id)
    objs = []
    for k, comp in enumerate(comps):
        ring = trace_polygon(comp, prob.geo)
        oid = f"{tile_id}:{k}" if tile_id else str(k)
        try:
            objs.append(object_features(comp, ring, prob, oid))
        except DegenerateGeometryError:  # pragma: no cover - pixel squares always have area
            continue
    return objs


def _finite_or_none(value):
    if value is None or not math.isfinite(value):
        return None
    return float(value)


def objects_to_geojson(objs: Iterable[DetectedObject], extra: Sequence[dict] | None = None) -> dict:
    """FeatureCollection with one Polygon feature per object.

    An infinite road distance (no roads in the tile) is written as null.
    """
    features = []
    for k, obj in enumerate(objs):
        props = {
            "id": obj.object_id,
            "tile": obj.tile_id,
            "area_m2": float(obj.area),
            "aspect_ratio": float(obj.aspect_ratio),
            "orientation_deg": float(obj.orientation),
            "mean_prob": float(obj.mean_probability),
            "year": obj.year,
        }
        if obj.road_distance is not None:
            props["road_distance_m"] = _finite_or_none(obj.road_distance)
            props["road_edge"] = obj.road_edge
        if extra is not None:
            props.update(extra[k])
        features.append(
            {
                "type": "Feature",
                "geometry": {"type": "Polygon", "coordinates": [close_ring(obj.polygon).tolist()]},
                "properties": props,
            }
        )
    return {"type": "FeatureCollection", "features": features}


def write_geojson(path, collection: dict) -> None:
    atomic_write_bytes(path, (json.dumps(collection) + "\n").encode())


def read_geojson(path) -> list[DetectedObject]:
    """Read objects written by :func:`write_geojson` (or any Polygon collection)."""
    data = json.loads(Path(path).read_text())
    objs = []
    for k, feat in enumerate(data.get("features", [])):
        geom = feat.get("geometry") or {}
        if geom.get("type") != "Polygon":
            raise ValueError(f"feature {k}: expected Polygon geometry, got {geom.get('type')}")
        props = feat.get("properties") or {}
        road = props.get("road_distance_m", "unset")
        objs.append(
            DetectedObject(
                polygon=np.asarray(geom["coordinates"][0], dtype=float),
                area=float(props.get("area_m2", float("nan"))),
                aspect_ratio=float(props.get("aspect_ratio", float("nan"))),
                orientation=float(props.get("orientation_deg", float("nan"))),
                mean_probability=float(props.get("mean_prob", float("nan"))),
                year=props.get("year"),
                road_distance=None if road == "unset" else (math.inf if road is None else float(road)),
                road_edge=props.get("road_edge"),
                tile_id=props.get("tile", ""),
                object_id=str(props.get("id", k)),
            )
        )
    return objs
