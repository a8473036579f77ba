"""Stand-in per-patch probability producers and tiled inference.

A real segmentation model plugs in at the file level: anything that writes
single-band f32 probability rasters can feed the object stage. The two
built-in scorers exist so the pipeline runs without a network:

* ``oracle`` turns a truth mask into probabilities, with optional symmetric
  noise ``eps`` and random value flips.
* ``heuristic`` correlates image brightness with an elongated bright
  rectangle at 8 orientations and keeps the strongest response. Straight
  bright roads light it up too, which is useful for exercising the filter.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import ndimage, signal

from .raster import RasterTile, make_patch_grid, stitch

__all__ = ["ScorerConfig", "score_patch", "score_tile", "patch_rng", "template_bank"]


@dataclass(frozen=True)
class ScorerConfig:
    kind: str = "oracle"
    oracle_noise: float = 0.0
    oracle_flip_rate: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("oracle", "heuristic"):
            raise ValueError(f"unknown scorer kind {self.kind!r}")
        if not 0.0 <= self.oracle_noise < 0.5:
            raise ValueError("oracle_noise must lie in [0, 0.5)")
        if not 0.0 <= self.oracle_flip_rate < 1.0:
            raise ValueError("oracle_flip_rate must lie in [0, 1)")

    @classmethod
    def from_json(cls, data: dict | None) -> "ScorerConfig":
        data = dict(data or {})
        return cls(
            kind=data.get("kind", "oracle"),
            oracle_noise=float(data.get("oracle_noise", 0.0)),
            oracle_flip_rate=float(data.get("oracle_flip_rate", 0.0)),
            seed=int(data.get("seed", 0)),
        )


def patch_rng(seed: int, origin: tuple[int, int], tile_id: str = "") -> np.random.Generator:
    """Generator keyed on (seed, tile, patch origin) so serial and parallel runs agree."""
    salt = zlib.crc32(tile_id.encode())
    return np.random.default_rng([int(seed), salt, int(origin[0]), int(origin[1])])


def _oracle(mask: np.ndarray, cfg: ScorerConfig, rng: np.random.Generator | None) -> np.ndarray:
    m = (mask > 0).astype(np.float32)
    eps = np.float32(cfg.oracle_noise)
    out = m * (np.float32(1) - eps) + (np.float32(1) - m) * eps
    if cfg.oracle_flip_rate > 0:
        rng = rng or np.random.default_rng(cfg.seed)
        flip = rng.random(out.shape) < cfg.oracle_flip_rate
        out = np.where(flip, np.float32(1) - out, out)
    return out.astype(np.float32)


@lru_cache(maxsize=4)
def template_bank(length: int = 31, width: int = 9, size: int = 41, n_angles: int = 8):
    """Zero-mean bright-bar templates at ``n_angles`` orientations over 180 degrees."""
    base = np.full((size, size), -1.0)
    top = (size - width) // 2
    left = (size - length) // 2
    base[top : top + width, left : left + length] = 1.0
    bank = []
    for k in range(n_angles):
        t = ndimage.rotate(base, 180.0 * k / n_angles, reshape=False, order=0, mode="nearest")
        t = t - t.mean()
        t /= t[t > 0].sum()  # unit response for a perfectly matching 0/1 image
        bank.append(t)
    return tuple(bank)


def _heuristic(image: np.ndarray) -> np.ndarray:
    rgb = image[:3].astype(np.float64)
    if image.dtype == np.uint8:
        rgb /= 255.0
    bright = rgb.mean(axis=0)
    bank = template_bank()
    half = bank[0].shape[0] // 2
    padded = np.pad(bright, half, mode="symmetric")
    best = None
    for t in bank:
        resp = signal.fftconvolve(padded, t[::-1, ::-1], mode="valid")
        best = resp if best is None else np.maximum(best, resp)
    return np.clip(best, 0.0, 1.0).astype(np.float32)


def score_patch(
    patch: RasterTile,
    truth_mask: RasterTile | None,
    cfg: ScorerConfig,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Probability patch in ``[0, 1]`` with the same height/width as ``patch``."""
    if cfg.kind == "oracle":
        if truth_mask is None:
            raise ValueError("the oracle scorer needs a truth mask")
        if truth_mask.band.shape != (patch.height, patch.width):
            raise ValueError("truth mask and imagery differ in size")
        return _oracle(truth_mask.band, cfg, rng)
    if patch.bands != 4:
        raise ValueError(f"heuristic scorer expects 4-band imagery, got {patch.bands}")
    return _heuristic(patch.data)


def score_tile(
    imagery: RasterTile,
    truth_mask: RasterTile | None,
    cfg: ScorerConfig,
    patch_size: int = 256,
    overlap: int = 64,
    tile_id: str = "",
) -> RasterTile:
    """Score every patch of the overlap grid and average them back into one raster."""
    grid = make_patch_grid(imagery.width, imagery.height, patch_size, overlap)
    outputs = []
    for row, col in grid:
        patch = imagery.window(row, col, patch_size, patch_size)
        mask = truth_mask.window(row, col, patch_size, patch_size) if truth_mask is not None else None
        rng = patch_rng(cfg.seed, (row, col), tile_id)
        outputs.append(((row, col), score_patch(patch, mask, cfg, rng)))
    return stitch(outputs, imagery.width, imagery.height, imagery.geo, imagery.timestamp)
