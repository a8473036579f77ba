"""Georeferenced raster tiles, patch grids and overlap-averaged stitching.

Rasters live on disk as a flat little-endian payload (band-sequential,
row-major) next to a JSON sidecar with the same stem::

    tile.bin
    tile.json   {"width": .., "height": .., "bands": .., "dtype": "u8"|"f32",
                 "geotransform": [ox, pw, 0, oy, 0, -ph], "crs": "EPSG:..",
                 "timestamp": 2017}
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "RasterError",
    "Geotransform",
    "RasterTile",
    "PatchGrid",
    "read_raster",
    "write_raster",
    "sidecar_path",
    "payload_path",
    "make_patch_grid",
    "stitch",
]

DTYPES = {"u8": np.dtype("<u1"), "f32": np.dtype("<f4")}

# Common geographic (degree-based) EPSG codes. Area and distance features are
# computed in meters, so these are refused at load time.
GEOGRAPHIC_EPSG = frozenset({4326, 4269, 4267, 4258, 4283, 4617, 4674, 4979, 4030})


class RasterError(ValueError):
    """Malformed raster header, payload or grid request."""


@dataclass(frozen=True)
class Geotransform:
    origin_x: float = 0.0
    origin_y: float = 0.0
    pixel_width: float = 1.0
    pixel_height: float = 1.0
    crs: str = "EPSG:3857"

    def __post_init__(self):
        if not (self.pixel_width > 0 and self.pixel_height > 0):
            raise RasterError("pixel sizes must be positive")
        code = _epsg_code(self.crs)
        if code in GEOGRAPHIC_EPSG:
            raise RasterError(f"{self.crs} is a geographic CRS; a projected CRS in meters is required")

    def to_geo(self, row, col):
        """Pixel-corner (row, col) to projected (x, y). Accepts arrays."""
        x = self.origin_x + np.asarray(col, dtype=float) * self.pixel_width
        y = self.origin_y - np.asarray(row, dtype=float) * self.pixel_height
        return x, y

    def to_pixel(self, x, y):
        """Inverse of :meth:`to_geo`; returns fractional (row, col)."""
        col = (np.asarray(x, dtype=float) - self.origin_x) / self.pixel_width
        row = (self.origin_y - np.asarray(y, dtype=float)) / self.pixel_height
        return row, col

    def as_gdal(self) -> list[float]:
        return [self.origin_x, self.pixel_width, 0.0, self.origin_y, 0.0, -self.pixel_height]

    @classmethod
    def from_gdal(cls, coeffs: Sequence[float], crs: str) -> "Geotransform":
        if len(coeffs) != 6:
            raise RasterError("geotransform must have 6 coefficients")
        ox, pw, rx, oy, ry, nph = (float(v) for v in coeffs)
        if rx != 0 or ry != 0:
            raise RasterError("rotated geotransforms are not supported")
        return cls(ox, oy, pw, -nph, crs)

    def shifted(self, row: int, col: int) -> "Geotransform":
        """Geotransform of a window whose top-left pixel is (row, col)."""
        x, y = self.to_geo(row, col)
        return Geotransform(float(x), float(y), self.pixel_width, self.pixel_height, self.crs)


def _epsg_code(crs: str) -> int | None:
    if isinstance(crs, str) and crs.upper().startswith("EPSG:"):
        try:
            return int(crs.split(":", 1)[1])
        except ValueError:
            return None
    return None


@dataclass
class RasterTile:
    """A (bands, height, width) pixel array with its georeference.

    ``data`` is stored band-sequential; a single-band mask or probability map
    still carries the leading band axis.
    """

    data: np.ndarray
    geo: Geotransform = field(default_factory=Geotransform)
    timestamp: int | None = None

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim == 2:
            data = data[np.newaxis]
        if data.ndim != 3:
            raise RasterError(f"raster data must be 2-D or 3-D, got shape {data.shape}")
        if data.dtype not in (np.uint8, np.float32):
            if data.dtype == bool:
                data = data.astype(np.uint8)
            elif np.issubdtype(data.dtype, np.floating):
                data = data.astype(np.float32)
            else:
                raise RasterError(f"unsupported dtype {data.dtype}")
        self.data = data

    @property
    def bands(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def dtype_code(self) -> str:
        return "u8" if self.data.dtype == np.uint8 else "f32"

    @property
    def band(self) -> np.ndarray:
        """The first band as a 2-D view."""
        return self.data[0]

    def window(self, row: int, col: int, height: int, width: int) -> "RasterTile":
        return RasterTile(
            self.data[:, row : row + height, col : col + width],
            self.geo.shifted(row, col),
            self.timestamp,
        )


def sidecar_path(path) -> Path:
    return Path(path).with_suffix(".json")


def payload_path(path) -> Path:
    return Path(path).with_suffix(".bin")


def read_raster(path) -> RasterTile:
    """Read a raster from its payload (``.bin``) or sidecar (``.json``) path."""
    header_file = sidecar_path(path)
    try:
        header = json.loads(header_file.read_text())
    except FileNotFoundError:
        raise RasterError(f"missing sidecar header {header_file}") from None
    except json.JSONDecodeError as exc:
        raise RasterError(f"malformed sidecar header {header_file}: {exc}") from None

    try:
        width, height, bands = int(header["width"]), int(header["height"]), int(header["bands"])
        code = header["dtype"]
        geo = Geotransform.from_gdal(header["geotransform"], header["crs"])
        timestamp = header.get("timestamp")
    except (KeyError, TypeError, ValueError) as exc:
        raise RasterError(f"malformed sidecar header {header_file}: {exc!r}") from None
    if code not in DTYPES:
        raise RasterError(f"dtype {code!r} not in {sorted(DTYPES)}")
    if min(width, height, bands) <= 0:
        raise RasterError("raster dimensions must be positive")

    raw = payload_path(path).read_bytes()
    dtype = DTYPES[code]
    expected = width * height * bands
    if len(raw) != expected * dtype.itemsize:
        raise RasterError(
            f"payload holds {len(raw) // dtype.itemsize} values, header declares {expected}"
        )
    data = np.frombuffer(raw, dtype=dtype).reshape(bands, height, width)
    data = data.astype(dtype.newbyteorder("="), copy=True)
    return RasterTile(data, geo, None if timestamp is None else int(timestamp))


def _header(tile: RasterTile) -> dict:
    return {
        "width": tile.width,
        "height": tile.height,
        "bands": tile.bands,
        "dtype": tile.dtype_code,
        "geotransform": tile.geo.as_gdal(),
        "crs": tile.geo.crs,
        "timestamp": tile.timestamp,
    }


def atomic_write_bytes(path, payload: bytes) -> None:
    """Write-temp-then-rename so readers never see a partial file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_raster(path, tile: RasterTile) -> Path:
    """Write ``tile`` as payload + sidecar. The sidecar is written last."""
    dtype = DTYPES[tile.dtype_code]
    atomic_write_bytes(payload_path(path), np.ascontiguousarray(tile.data, dtype=dtype).tobytes())
    atomic_write_bytes(sidecar_path(path), (json.dumps(_header(tile)) + "\n").encode())
    return payload_path(path)


@dataclass(frozen=True)
class PatchGrid:
    patch_size: int
    overlap: int
    origins: tuple[tuple[int, int], ...]

    @property
    def stride(self) -> int:
        return self.patch_size - self.overlap

    def __len__(self) -> int:
        return len(self.origins)

    def __iter__(self):
        return iter(self.origins)


def _axis_origins(length: int, patch_size: int, stride: int) -> list[int]:
    starts = list(range(0, length - patch_size + 1, stride))
    if starts[-1] != length - patch_size:
        starts.append(length - patch_size)
    return starts


def make_patch_grid(width: int, height: int, patch_size: int = 256, overlap: int = 64) -> PatchGrid:
    """Row-major patch origins; the last origin on each axis is clamped to the edge."""
    if not 0 <= overlap < patch_size:
        raise RasterError("need 0 <= overlap < patch_size")
    if width < patch_size or height < patch_size:
        raise RasterError(f"tile {width}x{height} is smaller than one {patch_size}px patch")
    stride = patch_size - overlap
    rows = _axis_origins(height, patch_size, stride)
    cols = _axis_origins(width, patch_size, stride)
    return PatchGrid(patch_size, overlap, tuple((r, c) for r in rows for c in cols))


def stitch(
    patch_outputs: Iterable[tuple[tuple[int, int], np.ndarray]],
    width: int,
    height: int,
    geo: Geotransform | None = None,
    timestamp: int | None = None,
) -> RasterTile:
    """Average overlapping patch predictions into one probability raster."""
    total = np.zeros((height, width), dtype=np.float64)
    count = np.zeros((height, width), dtype=np.uint16)
    patch_shape = None
    for (row, col), patch in patch_outputs:
        patch = np.asarray(patch)
        if patch.ndim == 3 and patch.shape[0] == 1:
            patch = patch[0]
        if patch.ndim != 2:
            raise RasterError(f"patch must be 2-D, got shape {patch.shape}")
        if patch_shape is None:
            patch_shape = patch.shape
        elif patch.shape != patch_shape:
            raise RasterError(f"patch of shape {patch.shape}, expected {patch_shape}")
        ph, pw = patch.shape
        if row < 0 or col < 0 or row + ph > height or col + pw > width:
            raise RasterError(f"patch at {(row, col)} falls outside the {width}x{height} tile")
        total[row : row + ph, col : col + pw] += patch
        count[row : row + ph, col : col + pw] += 1
    if (count == 0).any():
        raise RasterError("patches do not cover the tile")
    mean = total / count
    return RasterTile(mean.astype(np.float32), geo or Geotransform(), timestamp)
