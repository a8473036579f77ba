"""Detection metrics: IoU matching, F-beta, facility proximity validation, orientation histograms."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .geometry import open_ring, points_in_ring, polygon_polygon_distance, ring_centroid
from .objects import DetectedObject
from .raster import Geotransform

__all__ = [
    "MatchReport",
    "FacilityReport",
    "iou",
    "match_objects",
    "merge_reports",
    "f_beta",
    "rasterize_polygon",
    "facility_validation",
    "orientation_histogram",
]


def _keys(pixels) -> np.ndarray:
    if isinstance(pixels, DetectedObject):
        if pixels.pixels is None:
            raise ValueError(f"object {pixels.object_id!r} carries no pixel set; rasterize it first")
        pixels = pixels.pixels
    p = np.asarray(pixels, dtype=np.int64).reshape(-1, 2)
    return np.unique((p[:, 0] << 32) + p[:, 1])


def iou(a, b) -> float:
    """Intersection over union of two pixel sets given as ``(n, 2)`` (row, col) arrays."""
    ka, kb = _keys(a), _keys(b)
    if len(ka) == 0 and len(kb) == 0:
        raise ValueError("IoU of two empty pixel sets is undefined")
    inter = len(np.intersect1d(ka, kb, assume_unique=True))
    return inter / (len(ka) + len(kb) - inter)


def f_beta(precision: float, recall: float, beta: float = 2.0) -> float:
    if beta <= 0:
        raise ValueError("beta must be positive")
    if precision == 0 and recall == 0:
        return 0.0
    b2 = beta * beta
    return (1 + b2) * precision * recall / (b2 * precision + recall)


@dataclass
class MatchReport:
    true_positives: int
    false_positives: int
    false_negatives: int
    pairs: list = field(default_factory=list)  # (pred id, label id, iou)

    @property
    def precision(self) -> float:
        denom = self.true_positives + self.false_positives
        return self.true_positives / denom if denom else 0.0

    @property
    def recall(self) -> float:
        denom = self.true_positives + self.false_negatives
        return self.true_positives / denom if denom else 0.0

    @property
    def f2(self) -> float:
        return f_beta(self.precision, self.recall, 2.0)

    def to_json(self) -> dict:
        return {
            "tp": self.true_positives,
            "fp": self.false_positives,
            "fn": self.false_negatives,
            "precision": self.precision,
            "recall": self.recall,
            "f2": self.f2,
            "pairs": [[p, l, float(v)] for p, l, v in self.pairs],
        }


def merge_reports(reports: Sequence[MatchReport]) -> MatchReport:
    """Sum counts across tiles; ratios are recomputed from the totals."""
    out = MatchReport(0, 0, 0, [])
    for rep in reports:
        out.true_positives += rep.true_positives
        out.false_positives += rep.false_positives
        out.false_negatives += rep.false_negatives
        out.pairs.extend(rep.pairs)
    return out


def _ident(obj, k):
    if isinstance(obj, DetectedObject) and obj.object_id:
        return obj.object_id
    return k


def _overlap_table(pred_keys, label_keys):
    """Intersection sizes for every overlapping (pred, label) pair."""
    if not label_keys:
        return {}
    all_keys = np.concatenate(label_keys)
    owner = np.repeat(np.arange(len(label_keys)), [len(k) for k in label_keys])
    order = np.argsort(all_keys, kind="stable")
    keys_sorted, owner_sorted = all_keys[order], owner[order]
    table = {}
    for i, pk in enumerate(pred_keys):
        lo = np.searchsorted(keys_sorted, pk, "left")
        hi = np.searchsorted(keys_sorted, pk, "right")
        counts = hi - lo
        total = counts.sum()
        if total == 0:
            continue
        starts = np.repeat(lo - np.cumsum(counts) + counts, counts)
        hit = owner_sorted[starts + np.arange(total)]
        labels, inter = np.unique(hit, return_counts=True)
        for j, n in zip(labels.tolist(), inter.tolist()):
            table[(i, j)] = n
    return table


def match_objects(preds, labels, iou_thresh: float = 0.5) -> MatchReport:
    """Count a prediction as a true positive when its IoU with a label exceeds the threshold.

    Pairs are taken greedily by descending IoU with each label and prediction
    used at most once; above 0.5 at most one pairing per object is possible,
    so the greedy step never has to choose.
    """
    if iou_thresh < 0:
        raise ValueError("IoU threshold must be non-negative")
    pk = [_keys(p) for p in preds]
    lk = [_keys(l) for l in labels]
    candidates = []
    for (i, j), inter in _overlap_table(pk, lk).items():
        value = inter / (len(pk[i]) + len(lk[j]) - inter)
        if value > iou_thresh:
            candidates.append((-value, i, j))
    candidates.sort()
    used_p, used_l, pairs = set(), set(), []
    for neg, i, j in candidates:
        if i in used_p or j in used_l:
            continue
        used_p.add(i)
        used_l.add(j)
        pairs.append((_ident(preds[i], i), _ident(labels[j], j), -neg))
    tp = len(pairs)
    return MatchReport(tp, len(preds) - tp, len(labels) - tp, pairs)


def rasterize_polygon(ring, geo: Geotransform, shape: tuple[int, int]) -> np.ndarray:
    """Pixels (row, col) of a ``shape`` grid whose centres fall inside ``ring``."""
    ring = open_ring(ring)
    rows, cols = geo.to_pixel(ring[:, 0], ring[:, 1])
    r0 = max(int(np.floor(rows.min())), 0)
    r1 = min(int(np.ceil(rows.max())), shape[0])
    c0 = max(int(np.floor(cols.min())), 0)
    c1 = min(int(np.ceil(cols.max())), shape[1])
    if r0 >= r1 or c0 >= c1:
        return np.empty((0, 2), dtype=np.int64)
    rr, cc = np.mgrid[r0:r1, c0:c1]
    rr, cc = rr.ravel(), cc.ravel()
    x, y = geo.to_geo(rr + 0.5, cc + 0.5)
    inside = points_in_ring(np.column_stack([x, y]), ring)
    return np.column_stack([rr[inside], cc[inside]]).astype(np.int64)


@dataclass
class FacilityReport:
    true_positives: int
    false_positives: int
    false_negatives: int
    detected_facilities: int
    outside_area: int

    @property
    def precision(self) -> float:
        denom = self.true_positives + self.false_positives
        return self.true_positives / denom if denom else 0.0

    @property
    def recall(self) -> float:
        denom = self.detected_facilities + self.false_negatives
        return self.detected_facilities / denom if denom else 0.0

    @property
    def precision_lower_bound(self) -> float:
        """Precision if every prediction outside the validated area were wrong."""
        denom = self.true_positives + self.false_positives + self.outside_area
        return self.true_positives / denom if denom else 0.0

    def to_json(self) -> dict:
        return {
            "tp": self.true_positives,
            "fp": self.false_positives,
            "fn": self.false_negatives,
            "detected_facilities": self.detected_facilities,
            "outside_area": self.outside_area,
            "precision": self.precision,
            "precision_lower_bound": self.precision_lower_bound,
            "recall": self.recall,
        }


def _ring_of(obj):
    return open_ring(obj.polygon if isinstance(obj, DetectedObject) else obj)


def _bbox(ring):
    return np.r_[ring.min(axis=0), ring.max(axis=0)]


def facility_validation(
    preds,
    facilities: Sequence[tuple[object, str]],
    validated_area: Sequence | None = None,
    radius: float = 100.0,
    positive_class: str = "poultry",
) -> FacilityReport:
    """Proximity validation against facility polygons labelled ``poultry``/``other``/``empty``.

    A prediction inside the validated area is a true positive when its
    polygon lies within ``radius`` of a poultry facility polygon. A poultry
    facility with no such prediction is a false negative. Predictions whose
    centroid falls outside ``validated_area`` only enter the lower-bound
    precision.
    """
    if radius < 0:
        raise ValueError("radius must be non-negative")
    pred_rings = [_ring_of(p) for p in preds]
    poultry = [open_ring(ring) for ring, cls in facilities if cls == positive_class]

    if validated_area is None:
        in_area = [True] * len(pred_rings)
    else:
        areas = [open_ring(a) for a in validated_area]
        in_area = [
            any(points_in_ring(ring_centroid(r)[None], a)[0] for a in areas) for r in pred_rings
        ]

    pred_boxes = [_bbox(r) for r in pred_rings]
    fac_boxes = [_bbox(r) for r in poultry]
    near = np.zeros((len(pred_rings), len(poultry)), dtype=bool)
    for i, (ring, box) in enumerate(zip(pred_rings, pred_boxes)):
        if not in_area[i]:
            continue
        for j, (fring, fbox) in enumerate(zip(poultry, fac_boxes)):
            gap_x = max(fbox[0] - box[2], box[0] - fbox[2], 0.0)
            gap_y = max(fbox[1] - box[3], box[1] - fbox[3], 0.0)
            if math.hypot(gap_x, gap_y) > radius:
                continue
            near[i, j] = polygon_polygon_distance(ring, fring) <= radius

    inside = np.asarray(in_area, dtype=bool)
    tp = int(near.any(axis=1)[inside].sum())
    fp = int(inside.sum()) - tp
    detected = int(near.any(axis=0).sum())
    return FacilityReport(tp, fp, len(poultry) - detected, detected, int((~inside).sum()))


def orientation_histogram(objs, bin_width: float = 5.0) -> np.ndarray:
    """Counts of long-side orientations over ``[0, 180)``; bin k covers ``[k w, (k+1) w)``."""
    if bin_width <= 0 or not math.isclose(180.0 / bin_width, round(180.0 / bin_width)):
        raise ValueError(f"bin width {bin_width} must divide 180")
    nbins = int(round(180.0 / bin_width))
    angles = np.array(
        [o.orientation if isinstance(o, DetectedObject) else float(o) for o in objs], dtype=float
    )
    bins = np.floor(np.mod(angles, 180.0) / bin_width).astype(np.int64)
    bins = np.clip(bins, 0, nbins - 1)
    return np.bincount(bins, minlength=nbins)
