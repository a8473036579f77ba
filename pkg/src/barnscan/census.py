"""County-level comparison of predicted barn counts with census operation counts."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.stats import rankdata

from .geometry import open_ring, points_in_polygon, ring_centroid
from .objects import DetectedObject

__all__ = [
    "CountyRecord",
    "UNASSIGNED",
    "aggregate_by_county",
    "spearman",
    "threshold_sweep",
    "cv_subset_sweep",
    "read_county_csv",
    "read_county_boundaries",
]

log = logging.getLogger(__name__)

UNASSIGNED = "unassigned"


@dataclass
class CountyRecord:
    fips: str
    predicted_barns: int
    census_operations: dict[int, int | None] = field(default_factory=dict)
    cv: float | None = None
    boundary: list | None = None  # list of rings; even-odd across rings

    def __post_init__(self):
        if self.predicted_barns < 0:
            raise ValueError(f"county {self.fips}: negative barn count")
        if self.cv is not None and self.cv < 0:
            raise ValueError(f"county {self.fips}: negative CV")


def aggregate_by_county(
    objects: Sequence[DetectedObject], counties: Mapping[str, Sequence]
) -> dict[str, int]:
    """Count objects per county by the county containing each polygon centroid.

    ``counties`` maps fips to a list of rings (exterior and hole rings of all
    parts). Objects outside every county go to ``"unassigned"``.
    """
    counts = {fips: 0 for fips in counties}
    counts[UNASSIGNED] = 0
    if not objects:
        return counts
    centroids = np.array([ring_centroid(o.polygon if isinstance(o, DetectedObject) else o) for o in objects])
    hits = np.column_stack(
        [points_in_polygon(centroids, rings) for rings in counties.values()]
    ) if counties else np.zeros((len(objects), 0), dtype=bool)
    names = list(counties)
    for i, row in enumerate(hits):
        idx = np.flatnonzero(row)
        if len(idx) == 0:
            counts[UNASSIGNED] += 1
            continue
        if len(idx) > 1:
            log.warning("object %d lies in overlapping counties %s; using %s",
                        i, [names[j] for j in idx], names[idx[0]])
        counts[names[idx[0]]] += 1
    return counts


def spearman(x: Sequence[float], y: Sequence[float]) -> float:
    """Pearson correlation of average ranks (ties share the mean of their positions)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be 1-D and equally long")
    if len(x) < 2:
        raise ValueError("need at least two observations")
    rx = rankdata(x) - (len(x) + 1) / 2.0
    ry = rankdata(y) - (len(y) + 1) / 2.0
    sxx, syy = (rx * rx).sum(), (ry * ry).sum()
    if sxx == 0 or syy == 0:
        raise ValueError("Spearman correlation is undefined for constant ranks")
    rho = (rx * ry).sum() / math.sqrt(sxx * syy)
    return float(min(1.0, max(-1.0, rho)))


def _paired(records, threshold):
    pairs = [
        (r.predicted_barns, r.census_operations.get(threshold))
        for r in records
        if r.census_operations.get(threshold) is not None
    ]
    return [p for p, _ in pairs], [c for _, c in pairs]


def threshold_sweep(records: Sequence[CountyRecord], thresholds: Sequence[int]) -> dict[int, float]:
    """Spearman rho between predicted barns and operations of at least each size.

    Counties with a masked (missing) census value are dropped for that size only.
    """
    out = {}
    for t in thresholds:
        if not all(t in r.census_operations for r in records):
            raise ValueError(f"size threshold {t} missing from some county records")
        pred, ops = _paired(records, t)
        out[t] = spearman(pred, ops)
    return out


def cv_subset_sweep(
    records: Sequence[CountyRecord],
    cv_cutoffs: Sequence[float],
    threshold: int | None = None,
) -> dict[float, float | None]:
    """Spearman rho over the nested subsets ``{county : cv <= cutoff}``.

    ``threshold`` picks the census column, defaulting to the smallest size
    class (all operations). Subsets with fewer than two counties, or with
    constant ranks, map to ``None``.
    """
    if any(a > b for a, b in zip(cv_cutoffs, cv_cutoffs[1:])):
        raise ValueError("cutoffs must ascend")
    if threshold is None:
        threshold = min(min(r.census_operations) for r in records)
    out: dict[float, float | None] = {}
    for cut in cv_cutoffs:
        subset = [r for r in records if r.cv is not None and r.cv <= cut]
        pred, ops = _paired(subset, threshold)
        if len(pred) < 2:
            out[cut] = None
            continue
        try:
            out[cut] = spearman(pred, ops)
        except ValueError:
            out[cut] = None
    return out


def _cell(value: str):
    value = value.strip()
    return None if value in ("", "NA", "(D)", "(Z)") else value


def read_county_csv(path) -> list[CountyRecord]:
    """Read ``fips,predicted_barns,ops_<size>...,cv``; blank or masked cells become None."""
    records = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        fields = reader.fieldnames or []
        if "fips" not in fields or "predicted_barns" not in fields:
            raise ValueError(f"{path}: header needs 'fips' and 'predicted_barns'")
        sizes = {f: int(f.removeprefix("ops_")) for f in fields if f.startswith("ops_")}
        for row in reader:
            ops = {}
            for name, size in sizes.items():
                v = _cell(row[name])
                ops[size] = None if v is None else int(float(v))
            cv = _cell(row.get("cv", "") or "")
            records.append(
                CountyRecord(
                    fips=row["fips"].strip(),
                    predicted_barns=int(float(row["predicted_barns"])),
                    census_operations=ops,
                    cv=None if cv is None else float(cv),
                )
            )
    return records


def read_county_boundaries(path) -> dict[str, list[np.ndarray]]:
    """fips -> rings from a GeoJSON collection of Polygon/MultiPolygon features."""
    data = json.loads(Path(path).read_text())
    out: dict[str, list[np.ndarray]] = {}
    for feat in data.get("features", []):
        props = feat.get("properties") or {}
        fips = str(props.get("fips", feat.get("id")))
        geom = feat["geometry"]
        if geom["type"] == "Polygon":
            polys = [geom["coordinates"]]
        elif geom["type"] == "MultiPolygon":
            polys = geom["coordinates"]
        else:
            raise ValueError(f"county {fips}: unsupported geometry {geom['type']}")
        out.setdefault(fips, []).extend(open_ring(r) for poly in polys for r in poly)
    return out
