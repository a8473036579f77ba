"""Generated test worlds: barns, bright roads and clutter with known ground truth.

Each tile carries two masks. ``label_mask`` holds only the planted barns.
``detector_mask`` is what an imperfect segmentation model would fire on:
the barns plus barn-sized stretches of road, small bright blobs and large
square pads. Feeding ``detector_mask`` to the oracle scorer gives a
probability raster whose false positives are known by construction.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .filtering import DEFAULT_RULES
from .objects import _corner_hull, _rect_from_hull, connected_components, trace_polygon
from .raster import Geotransform, RasterTile, write_raster
from .roads import RoadNetwork

__all__ = ["SyntheticTile", "make_world", "write_world", "barn_rectangle"]

ROAD_WIDTH = 8


@dataclass
class SyntheticTile:
    tile_id: str
    imagery: RasterTile
    detector_mask: RasterTile
    label_mask: RasterTile
    roads: RoadNetwork
    clutter: dict = field(default_factory=dict)  # expected rejection reason -> count


def barn_rectangle(shape, center, long_side, short_side, angle_deg) -> np.ndarray:
    """Boolean mask of pixels whose centres fall inside a rotated rectangle (row/col frame, angle CCW on the map)."""
    rr, cc = np.mgrid[0 : shape[0], 0 : shape[1]]
    x = cc + 0.5 - center[1]
    y = -(rr + 0.5 - center[0])
    t = math.radians(angle_deg)
    u = x * math.cos(t) + y * math.sin(t)
    v = -x * math.sin(t) + y * math.cos(t)
    return (np.abs(u) <= long_side / 2) & (np.abs(v) <= short_side / 2)


def _in_rules(mask: np.ndarray, rules=DEFAULT_RULES) -> bool:
    comps = connected_components(mask)
    if len(comps) != 1:
        return False
    rect = _rect_from_hull(_corner_hull(comps[0]).astype(float))
    lo, hi = rules.area_range
    alo, ahi = rules.aspect_range
    # keep clear of the bounds so rasterisation never flips a verdict
    return lo * 1.1 <= rect.area <= hi * 0.9 and alo * 1.1 <= rect.aspect_ratio <= ahi * 0.9


def _grow(mask: np.ndarray, k: int) -> np.ndarray:
    from scipy import ndimage

    return ndimage.binary_dilation(mask, iterations=k)


def make_world(
    n_tiles: int = 20,
    size: int = 512,
    barns_per_tile: int = 4,
    seed: int = 0,
    year: int = 2017,
    road_pieces: int = 2,
    small_blobs: int = 2,
    pads: int = 1,
    crs: str = "EPSG:32618",
) -> list[SyntheticTile]:
    rng = np.random.default_rng(seed)
    world = []
    for k in range(n_tiles):
        shape = (size, size)
        geo = Geotransform(500_000.0 + k * size, 4_200_000.0, 1.0, 1.0, crs)
        occupied = np.zeros(shape, dtype=bool)
        detector = np.zeros(shape, dtype=bool)
        labels = np.zeros(shape, dtype=bool)
        bright = np.zeros(shape, dtype=np.float32)

        # one horizontal and one vertical road, away from the tile edge
        r_road = int(rng.integers(size // 4, 3 * size // 4))
        c_road = int(rng.integers(size // 4, 3 * size // 4))
        half = ROAD_WIDTH // 2
        road_px = np.zeros(shape, dtype=bool)
        road_px[r_road - half : r_road + half, :] = True
        road_px[:, c_road - half : c_road + half] = True
        bright[road_px] = 0.85
        occupied |= _grow(road_px, 12)
        x0, y0 = geo.to_geo(r_road, 0)
        x1, _ = geo.to_geo(r_road, size)
        xc, yt = geo.to_geo(0, c_road)
        _, yb = geo.to_geo(size, c_road)
        net = RoadNetwork(
            [np.array([[x0, y0], [x1, y0]]), np.array([[xc, yt], [xc, yb]])],
            [f"{k}-h", f"{k}-v"],
            f"t{k:03d}",
        )

        clutter = {"road-intersection": 0, "area-below-min": 0, "aspect-below-min": 0}
        # barn-sized stretches of road the detector fires on
        for j in range(road_pieces):
            length = int(rng.integers(80, 151))
            if j % 2 == 0:
                c0 = int(rng.integers(4, size - length - 4))
                piece = np.zeros(shape, dtype=bool)
                piece[r_road - half : r_road + half, c0 : c0 + length] = True
            else:
                r0 = int(rng.integers(4, size - length - 4))
                piece = np.zeros(shape, dtype=bool)
                piece[r0 : r0 + length, c_road - half : c_road + half] = True
            if (detector & _grow(piece, 2)).any():
                continue
            detector |= piece
            clutter["road-intersection"] += 1

        def place(make, tries=200):
            for _ in range(tries):
                cand = make()
                if cand is None or (cand & occupied).any():
                    continue
                return cand
            return None

        def random_barn():
            long_side = float(rng.uniform(55, 150))
            short_side = float(rng.uniform(11, 22))
            angle = float(rng.uniform(0, 180))
            margin = long_side / 2 + 4
            center = (float(rng.uniform(margin, size - margin)), float(rng.uniform(margin, size - margin)))
            m = barn_rectangle(shape, center, long_side, short_side, angle)
            return m if _in_rules(m) else None

        for _ in range(barns_per_tile):
            m = place(random_barn)
            if m is None:
                continue
            labels |= m
            detector |= m
            bright[m] = 0.95
            occupied |= _grow(m, 3)

        def square(lo, hi):
            def make():
                s = int(rng.integers(lo, hi))
                r0 = int(rng.integers(2, size - s - 2))
                c0 = int(rng.integers(2, size - s - 2))
                m = np.zeros(shape, dtype=bool)
                m[r0 : r0 + s, c0 : c0 + s] = True
                return m
            return make

        for reason, count, maker in (
            ("area-below-min", small_blobs, square(6, 15)),
            ("aspect-below-min", pads, square(30, 60)),
        ):
            for _ in range(count):
                m = place(maker)
                if m is None:
                    continue
                detector |= m
                bright[m] = 0.7
                occupied |= _grow(m, 3)
                clutter[reason] += 1

        noise = rng.normal(0.0, 0.03, size=(4,) + shape)
        img = np.clip(0.25 + bright[None] + noise, 0, 1)
        img[3] = np.clip(0.5 - 0.3 * bright + noise[3], 0, 1)  # built surfaces are dark in NIR
        imagery = RasterTile((img * 255).round().astype(np.uint8), geo, year)
        world.append(
            SyntheticTile(
                f"t{k:03d}",
                imagery,
                RasterTile(detector.astype(np.uint8), geo, year),
                RasterTile(labels.astype(np.uint8), geo, year),
                net,
                clutter,
            )
        )
    return world


def write_world(world: list[SyntheticTile], input_dir) -> Path:
    """Lay the world out as a pipeline input directory."""
    root = Path(input_dir)
    for t in world:
        write_raster(root / "imagery" / f"{t.tile_id}.bin", t.imagery)
        write_raster(root / "masks" / f"{t.tile_id}.bin", t.detector_mask)
        comps = connected_components(t.label_mask, t.tile_id)
        rings = [trace_polygon(c, t.label_mask.geo) for c in comps]
        feats = {
            "type": "FeatureCollection",
            "features": [
                {"type": "Feature", "geometry": {"type": "Polygon", "coordinates": [r.tolist()]},
                 "properties": {"id": f"{t.tile_id}:label:{i}"}}
                for i, r in enumerate(rings)
            ],
        }
        (root / "labels").mkdir(parents=True, exist_ok=True)
        (root / "labels" / f"{t.tile_id}.geojson").write_text(json.dumps(feats) + "\n")
        roads = {
            "type": "FeatureCollection",
            "features": [
                {"type": "Feature", "id": eid,
                 "geometry": {"type": "LineString", "coordinates": line.tolist()}, "properties": {}}
                for eid, line in zip(t.roads.edge_ids, t.roads.edges)
            ],
        }
        (root / "roads").mkdir(parents=True, exist_ok=True)
        (root / "roads" / f"{t.tile_id}.roads.geojson").write_text(json.dumps(roads) + "\n")
    return root
