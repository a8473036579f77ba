"""barnscan: from barn probability rasters to filtered, evaluated polygon detections.

Submodules
----------
raster     georeferenced tiles, patch grids, overlap-averaged stitching
scorer     stand-in probability producers (oracle, heuristic) and tiled inference
sampler    training-patch manifests with background rejection and augmentation
objects    thresholding, 4-connected components, polygons, rectangle features
roads      split-edge k-d tree index and exact polygon-to-road distances
filtering  rule-based barn classifier
evaluate   IoU matching, F-beta, facility proximity validation, orientation histograms
ucb        UCB active-validation campaigns
census     county aggregation and Spearman comparisons
pipeline   directory-per-stage batch runner behind the ``barnscan`` command
synthetic  generated worlds with known ground truth
"""

from .raster import Geotransform, PatchGrid, RasterTile, make_patch_grid, read_raster, stitch, write_raster
from .objects import DetectedObject, MinRotatedRect, extract_objects, min_rotated_rect
from .filtering import DEFAULT_RULES, RuleSet, classify, filter_objects
from .evaluate import f_beta, match_objects

__version__ = "0.1.0"
