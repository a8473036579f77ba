"""From a probability raster to barn-like objects and their shape features."""

from __future__ import annotations

import numpy as np

from barnscan.objects import extract_objects
from barnscan.raster import Geotransform, RasterTile
from barnscan.synthetic import barn_rectangle

shape = (300, 400)
prob = np.zeros(shape, np.float32)
prob[20:34, 20:175] = 0.9  # a 155 m x 14 m barn, 1 m pixels
prob[barn_rectangle(shape, (180, 250), 120, 20, 30)] = 0.8  # rotated barn
prob[250:270, 30:50] = 0.7  # a square silo-like blob
prob[100, 300] = prob[101, 301] = 0.95  # diagonal pixels are separate objects

tile = RasterTile(prob, Geotransform(0.0, 0.0, 1.0, 1.0), 2016)
for o in extract_objects(tile, tau=0.5, tile_id="demo"):
    print(f"{o.object_id:7s} area {o.area:8.1f} m2  aspect {o.aspect_ratio:6.2f}  "
          f"orientation {o.orientation:6.1f} deg  mean p {o.mean_probability:.2f}  "
          f"ring vertices {len(o.polygon) - 1}")
