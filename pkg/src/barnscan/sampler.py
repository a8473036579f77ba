"""Training-patch manifests with background rejection, rotation/flip and temporal augmentation."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from .raster import RasterTile, atomic_write_bytes

__all__ = [
    "SamplerConfig",
    "TemporalPairing",
    "PatchSample",
    "iter_candidates",
    "sample_patches",
    "temporal_pairs",
    "apply_augmentation",
    "write_manifest",
    "read_manifest",
]


@dataclass(frozen=True)
class SamplerConfig:
    alpha: float = 0.05
    patch_size: int = 256
    n_samples: int = 1000
    rotation_augment: bool = True
    rotation_step: int = 90  # 45 adds the diagonal rotations
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError("alpha must lie in [0, 1)")
        if self.rotation_step not in (45, 90):
            raise ValueError("rotation_step must be 45 or 90")


@dataclass(frozen=True)
class PatchSample:
    tile: str
    row: int
    col: int
    year: int | None = None
    rotation: int = 0
    hflip: bool = False
    vflip: bool = False
    positive: bool = False

    def to_json(self) -> dict:
        return {
            "tile": self.tile,
            "row": self.row,
            "col": self.col,
            "year": self.year,
            "rot": self.rotation,
            "hflip": self.hflip,
            "vflip": self.vflip,
            "positive": self.positive,
        }

    @classmethod
    def from_json(cls, d: dict) -> "PatchSample":
        return cls(d["tile"], int(d["row"]), int(d["col"]), d.get("year"), int(d["rot"]),
                   bool(d["hflip"]), bool(d["vflip"]), bool(d["positive"]))


def _integral(mask: np.ndarray) -> np.ndarray:
    s = np.zeros((mask.shape[0] + 1, mask.shape[1] + 1), dtype=np.int64)
    np.cumsum(np.cumsum(mask > 0, axis=0), axis=1, out=s[1:, 1:])
    return s


def iter_candidates(
    tiles: Sequence[tuple[RasterTile, RasterTile]],
    cfg: SamplerConfig,
    tile_ids: Sequence[str] | None = None,
) -> Iterator[tuple[PatchSample, bool]]:
    """Endless stream of ``(candidate, kept)``.

    A candidate picks a tile uniformly, then a uniform origin (with
    replacement). Background-only candidates are kept with probability
    ``1 - alpha``; candidates containing a positive pixel are always kept.
    """
    size = cfg.patch_size
    tile_ids = list(tile_ids) if tile_ids is not None else [str(k) for k in range(len(tiles))]
    usable = []
    for k, (img, mask) in enumerate(tiles):
        if (img.height, img.width) != (mask.height, mask.width):
            raise ValueError(f"tile {tile_ids[k]}: imagery and mask dimensions differ")
        if img.height >= size and img.width >= size:
            usable.append(k)
    if not usable:
        raise ValueError(f"no tile is at least {size}x{size} pixels")
    sums = {k: _integral(tiles[k][1].band) for k in usable}

    rng = np.random.default_rng(cfg.seed)
    rotations = list(range(0, 360, cfg.rotation_step)) if cfg.rotation_augment else [0]
    while True:
        k = usable[int(rng.integers(len(usable)))]
        img, _ = tiles[k]
        row = int(rng.integers(img.height - size + 1))
        col = int(rng.integers(img.width - size + 1))
        s = sums[k]
        count = s[row + size, col + size] - s[row, col + size] - s[row + size, col] + s[row, col]
        positive = bool(count > 0)
        keep = positive or rng.random() >= cfg.alpha
        if cfg.rotation_augment:
            rot = rotations[int(rng.integers(len(rotations)))]
            hflip, vflip = bool(rng.integers(2)), bool(rng.integers(2))
        else:
            rot, hflip, vflip = 0, False, False
        yield PatchSample(tile_ids[k], row, col, img.timestamp, rot, hflip, vflip, positive), keep


def sample_patches(
    tiles: Sequence[tuple[RasterTile, RasterTile]],
    cfg: SamplerConfig,
    tile_ids: Sequence[str] | None = None,
) -> list[PatchSample]:
    """Draw candidates until ``cfg.n_samples`` have been kept."""
    if cfg.n_samples <= 0:
        return []
    out = []
    for sample, keep in iter_candidates(tiles, cfg, tile_ids):
        if keep:
            out.append(sample)
            if len(out) == cfg.n_samples:
                return out
    return out  # pragma: no cover


@dataclass
class TemporalPairing:
    mode: str
    label_year: int
    imagery_years: list[int] = field(default_factory=list)
    construction_years: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if self.mode not in ("single", "all", "augmented"):
            raise ValueError(f"unknown temporal mode {self.mode!r}")


def temporal_pairs(
    tile_id: str, pairing: TemporalPairing, barns: Iterable[str] | None = None
) -> list[tuple[int, bool]]:
    """Imagery years to pair with the label mask of ``label_year``, and whether the mask is valid.

    ``barns`` lists the labelled barns intersecting the tile; by default
    every barn in ``construction_years`` is assumed to.
    """
    t = pairing.label_year
    if pairing.mode == "single":
        return [(t, True)]
    years = sorted(set(pairing.imagery_years) | {t})
    if pairing.mode == "all":
        return [(y, True) for y in years]
    barns = list(pairing.construction_years) if barns is None else list(barns)
    missing = [b for b in barns if b not in pairing.construction_years]
    if missing:
        raise ValueError(f"tile {tile_id}: no construction year for barns {missing}")
    built = max((pairing.construction_years[b] for b in barns), default=-math.inf)
    return [(y, y >= built) for y in years]


def _rotate_nearest(band: np.ndarray, degrees: float, out_size: int) -> np.ndarray:
    """Counter-clockwise rotation about the centre, nearest-neighbour, zero fill."""
    h, w = band.shape
    t = math.radians(degrees)
    c, s = math.cos(t), math.sin(t)
    rr, cc = np.mgrid[0:out_size, 0:out_size].astype(float)
    y = (out_size - 1) / 2.0 - rr
    x = cc - (out_size - 1) / 2.0
    # inverse rotation back into the source frame
    xs = c * x + s * y
    ys = -s * x + c * y
    src_c = np.rint(xs + (w - 1) / 2.0).astype(np.int64)
    src_r = np.rint((h - 1) / 2.0 - ys).astype(np.int64)
    valid = (src_r >= 0) & (src_r < h) & (src_c >= 0) & (src_c < w)
    out = np.zeros((out_size, out_size), dtype=band.dtype)
    out[valid] = band[src_r[valid], src_c[valid]]
    return out


def apply_augmentation(patch: RasterTile, sample: PatchSample, out_size: int | None = None) -> RasterTile:
    """Rotate counter-clockwise by ``sample.rotation``, then flip horizontally, then vertically.

    Multiples of 90 degrees are exact pixel permutations. Diagonal rotations
    resample with nearest neighbour; pass a crop about sqrt(2) larger than
    ``out_size`` so the rotated corners stay filled.
    """
    data = patch.data
    rot = sample.rotation % 360
    if rot and patch.height != patch.width:
        raise ValueError("rotation needs a square patch")
    if rot % 90 == 0:
        data = np.rot90(data, k=rot // 90, axes=(1, 2))
        if out_size is not None and out_size != data.shape[1]:
            off = (data.shape[1] - out_size) // 2
            data = data[:, off : off + out_size, off : off + out_size]
    else:
        size = out_size or patch.height
        data = np.stack([_rotate_nearest(b, rot, size) for b in data])
    if sample.hflip:
        data = data[:, :, ::-1]
    if sample.vflip:
        data = data[:, ::-1, :]
    return RasterTile(np.ascontiguousarray(data), patch.geo, patch.timestamp)


def write_manifest(path, samples: Iterable[PatchSample]) -> None:
    lines = "".join(json.dumps(s.to_json()) + "\n" for s in samples)
    atomic_write_bytes(path, lines.encode())


def read_manifest(path) -> list[PatchSample]:
    with open(path) as fh:
        return [PatchSample.from_json(json.loads(line)) for line in fh if line.strip()]
