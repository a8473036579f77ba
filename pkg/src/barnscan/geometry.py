"""Planar geometry helpers shared by the object, road and evaluation code.

Rings are ``(n, 2)`` float arrays of ``(x, y)`` vertices. Closed rings (first
vertex repeated at the end, as in GeoJSON) and open rings are both accepted.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "open_ring",
    "close_ring",
    "shoelace_area",
    "ring_centroid",
    "points_in_ring",
    "points_in_polygon",
    "convex_hull",
    "point_segment_distance",
    "segments_intersect",
    "segment_segment_distance",
    "polygon_polyline_distance",
    "polygon_polygon_distance",
]


def open_ring(ring) -> np.ndarray:
    ring = np.asarray(ring, dtype=float)
    if len(ring) > 1 and np.array_equal(ring[0], ring[-1]):
        ring = ring[:-1]
    return ring


def close_ring(ring) -> np.ndarray:
    ring = open_ring(ring)
    return np.vstack([ring, ring[:1]])


def shoelace_area(ring) -> float:
    """Signed area; positive for counter-clockwise rings."""
    p = open_ring(ring)
    x, y = p[:, 0], p[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def ring_centroid(ring) -> np.ndarray:
    p = open_ring(ring)
    # shift to the first vertex to limit cancellation on large projected coordinates
    base = p[0]
    q = p - base
    x, y = q[:, 0], q[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    a = cross.sum() / 2.0
    if a == 0:
        return base + q.mean(axis=0)
    cx = ((x + xn) * cross).sum() / (6.0 * a)
    cy = ((y + yn) * cross).sum() / (6.0 * a)
    return base + np.array([cx, cy])


def points_in_ring(points, ring) -> np.ndarray:
    """Even-odd ray casting for many points against one ring.

    A horizontal ray is cast towards +x; an edge counts when it straddles the
    point's y (half-open on the lower vertex) and crosses right of the point.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    p = open_ring(ring)
    x1, y1 = p[:, 0], p[:, 1]
    x2, y2 = np.roll(x1, -1), np.roll(y1, -1)
    px = pts[:, 0:1]
    py = pts[:, 1:2]
    straddle = (y1 > py) != (y2 > py)
    with np.errstate(divide="ignore", invalid="ignore"):
        x_cross = x1 + (py - y1) * (x2 - x1) / (y2 - y1)
    hits = straddle & (px < x_cross)
    return (hits.sum(axis=1) % 2).astype(bool)


def points_in_polygon(points, rings) -> np.ndarray:
    """Even-odd containment over several rings (exterior plus holes, or parts)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    inside = np.zeros(len(pts), dtype=bool)
    for ring in rings:
        inside ^= points_in_ring(pts, ring)
    return inside


def _cross(o, a, b):
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_hull(points) -> np.ndarray:
    """Andrew's monotone chain. Counter-clockwise, no repeated or collinear vertices.

    Integer input keeps every orientation test exact.
    """
    pts = np.asarray(points)
    pts = np.unique(pts, axis=0)  # sorts by x, then y
    if len(pts) <= 2:
        return pts
    pts = [tuple(p) for p in pts.tolist()]

    lower: list = []
    for p in pts:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list = []
    for p in reversed(pts):
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    hull = lower[:-1] + upper[:-1]
    return np.array(hull, dtype=np.asarray(points).dtype)


def point_segment_distance(p, a, b) -> np.ndarray:
    """Distance from points ``p`` to segments ``a``-``b`` (broadcasting over leading axes)."""
    p, a, b = (np.asarray(v, dtype=float) for v in (p, a, b))
    ab = b - a
    ap = p - a
    denom = (ab * ab).sum(axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(denom > 0, (ap * ab).sum(axis=-1) / denom, 0.0)
    t = np.clip(t, 0.0, 1.0)
    closest = a + t[..., None] * ab
    return np.hypot(*np.moveaxis(p - closest, -1, 0))


def _orient(a, b, c):
    return (b[..., 0] - a[..., 0]) * (c[..., 1] - a[..., 1]) - (b[..., 1] - a[..., 1]) * (
        c[..., 0] - a[..., 0]
    )


def _on_segment(a, b, p):
    return (
        (np.minimum(a[..., 0], b[..., 0]) <= p[..., 0])
        & (p[..., 0] <= np.maximum(a[..., 0], b[..., 0]))
        & (np.minimum(a[..., 1], b[..., 1]) <= p[..., 1])
        & (p[..., 1] <= np.maximum(a[..., 1], b[..., 1]))
    )


def segments_intersect(a, b, c, d) -> np.ndarray:
    """Closed-segment intersection test for ``a-b`` against ``c-d`` (broadcasting)."""
    a, b, c, d = (np.asarray(v, dtype=float) for v in (a, b, c, d))
    d1 = _orient(c, d, a)
    d2 = _orient(c, d, b)
    d3 = _orient(a, b, c)
    d4 = _orient(a, b, d)
    proper = (((d1 > 0) & (d2 < 0)) | ((d1 < 0) & (d2 > 0))) & (
        ((d3 > 0) & (d4 < 0)) | ((d3 < 0) & (d4 > 0))
    )
    touching = (
        ((d1 == 0) & _on_segment(c, d, a))
        | ((d2 == 0) & _on_segment(c, d, b))
        | ((d3 == 0) & _on_segment(a, b, c))
        | ((d4 == 0) & _on_segment(a, b, d))
    )
    return proper | touching


def segment_segment_distance(a, b, c, d) -> np.ndarray:
    """Minimum distance between segments ``a-b`` and ``c-d`` (broadcasting)."""
    dist = np.minimum(
        np.minimum(point_segment_distance(a, c, d), point_segment_distance(b, c, d)),
        np.minimum(point_segment_distance(c, a, b), point_segment_distance(d, a, b)),
    )
    return np.where(segments_intersect(a, b, c, d), 0.0, dist)


def _edges(ring):
    p = open_ring(ring)
    return p, np.roll(p, -1, axis=0)


def polygon_polyline_distance(ring, line) -> float:
    """Distance from a polygon (area, not just boundary) to a polyline; 0 on contact."""
    line = np.asarray(line, dtype=float)
    if points_in_ring(line[:1], ring)[0]:
        return 0.0
    pa, pb = _edges(ring)
    la, lb = line[:-1], line[1:]
    d = segment_segment_distance(pa[:, None], pb[:, None], la[None], lb[None])
    return float(d.min())


def polygon_polygon_distance(ring_a, ring_b) -> float:
    """Minimum distance between two polygon areas; 0 if they touch or overlap."""
    a, b = open_ring(ring_a), open_ring(ring_b)
    if points_in_ring(a[:1], b)[0] or points_in_ring(b[:1], a)[0]:
        return 0.0
    aa, ab = _edges(a)
    ba, bb = _edges(b)
    d = segment_segment_distance(aa[:, None], ab[:, None], ba[None], bb[None])
    return float(d.min())
