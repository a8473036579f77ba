"""Directory-per-stage batch runner.

Input layout (``input_dir``)::

    imagery/<tile>.bin|.json        4-band u8 imagery (or any bands for the oracle)
    masks/<tile>.bin|.json          truth masks (oracle scorer, evaluation labels, sampling)
    labels/<tile>.geojson           optional label polygons; preferred over masks for eval
    roads/<tile>.roads.geojson      road LineStrings in the raster CRS
    history/<tile>.<year>.bin|.json earlier imagery for temporal sampling
    construction_years.json         {tile: {barn_id: year}} for augmented sampling
    facilities.geojson              optional facility polygons, property "class"
    validated_area.geojson          optional validated-area polygons
    scores.json, truth.json         UCB campaign inputs ({image: [scores]}, {image: bool})
    counties.csv, counties.geojson  census comparison inputs

Output layout (``output_dir``): ``prob/``, ``objects/``, ``filtered/``,
``roads_index/``, ``reports/``. Every per-tile file is written atomically and
existing outputs are skipped, so an interrupted run can simply be restarted.
"""

from __future__ import annotations

import json
import logging
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import census, evaluate, filtering, objects, roads, sampler, scorer, ucb
from .raster import RasterError, atomic_write_bytes, read_raster, write_raster

__all__ = [
    "PipelineConfig",
    "ConfigError",
    "StageResult",
    "run_infer",
    "run_detect",
    "run_eval",
    "run_ucb",
    "run_census",
    "run_roads_index",
    "run_sample",
]

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    """Invalid pipeline configuration."""


@dataclass(frozen=True)
class PipelineConfig:
    input_dir: str = "."
    output_dir: str = "out"
    workers: int = 1
    seed: int = 0
    # inference
    patch_size: int = 256
    overlap: int = 64
    scorer: dict = field(default_factory=lambda: {"kind": "oracle"})
    # objects and filtering
    tau: float = 0.5
    split_length: float = 100.0
    rules: str | None = None
    # evaluation
    iou_threshold: float = 0.5
    radius: float = 100.0
    # sampling
    alpha: float = 0.05
    n_samples: int = 1000
    rotation_step: int = 90
    temporal: str = "single"
    # active validation
    ucb_m: int = 50
    ucb_alpha: float = 1.0
    ucb_buckets: int = 10
    ucb_estimator: str = "mu"
    ucb_max_rounds: int = 10_000
    # census
    cv_cutoffs: tuple = (0.05, 0.1, 0.15, 0.2, 0.3, 0.5, 1.0)

    def __post_init__(self):
        problems = []
        if self.workers < 1:
            problems.append("workers must be >= 1")
        if not 0 <= self.overlap < self.patch_size:
            problems.append("need 0 <= overlap < patch_size")
        if not 0 <= self.tau <= 1:
            problems.append("tau must lie in [0, 1]")
        if self.split_length <= 0:
            problems.append("split_length must be positive")
        if self.iou_threshold < 0:
            problems.append("iou_threshold must be >= 0")
        if self.radius < 0:
            problems.append("radius must be >= 0")
        if not 0 <= self.alpha < 1:
            problems.append("alpha must lie in [0, 1)")
        if self.temporal not in ("single", "all", "augmented"):
            problems.append(f"unknown temporal mode {self.temporal!r}")
        if self.ucb_estimator not in ("mu", "pi"):
            problems.append("ucb_estimator must be 'mu' or 'pi'")
        if self.ucb_m < 1:
            problems.append("ucb_m must be >= 1")
        try:
            scorer.ScorerConfig.from_json({**self.scorer, "seed": self.seed})
        except (ValueError, TypeError) as exc:
            problems.append(str(exc))
        if problems:
            raise ConfigError("; ".join(problems))

    @classmethod
    def load(cls, path=None, **overrides) -> "PipelineConfig":
        """Config file values, then non-None ``overrides`` on top."""
        data = {}
        if path is not None:
            try:
                data = json.loads(Path(path).read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(f"cannot read config {path}: {exc}") from None
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        data.update({k: v for k, v in overrides.items() if v is not None})
        if "cv_cutoffs" in data:
            data["cv_cutoffs"] = tuple(data["cv_cutoffs"])
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @property
    def inp(self) -> Path:
        return Path(self.input_dir)

    @property
    def out(self) -> Path:
        return Path(self.output_dir)

    def scorer_config(self) -> scorer.ScorerConfig:
        return scorer.ScorerConfig.from_json({**self.scorer, "seed": self.seed})

    def rule_set(self) -> filtering.RuleSet:
        return filtering.RuleSet.load(self.rules) if self.rules else filtering.default_rules()


@dataclass
class StageResult:
    done: list = field(default_factory=list)
    skipped: list = field(default_factory=list)
    failed: list = field(default_factory=list)

    @property
    def exit_code(self) -> int:
        return 1 if self.failed else 0


def _tile_ids(directory: Path, pattern: str = "*.json") -> list[str]:
    return sorted(p.stem for p in directory.glob(pattern)) if directory.is_dir() else []


def _run_tiles(cfg: PipelineConfig, func, tiles: list[str]) -> StageResult:
    result = StageResult()
    if cfg.workers == 1 or len(tiles) <= 1:
        outcomes = [func(cfg, t) for t in tiles]
    else:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            outcomes = list(pool.map(func, [cfg] * len(tiles), tiles))
    for tile, (status, message) in zip(tiles, outcomes):
        getattr(result, status).append(tile)
        if status == "failed":
            log.error("tile %s: %s", tile, message)
    return result


# ---- infer -----------------------------------------------------------------

def _infer_tile(cfg: PipelineConfig, tile: str):
    target = cfg.out / "prob" / f"{tile}.bin"
    if target.with_suffix(".json").exists() and target.exists():
        return "skipped", None
    try:
        imagery = read_raster(cfg.inp / "imagery" / f"{tile}.json")
        sc = cfg.scorer_config()
        truth = None
        if sc.kind == "oracle":
            truth = read_raster(cfg.inp / "masks" / f"{tile}.json")
        prob = scorer.score_tile(imagery, truth, sc, cfg.patch_size, cfg.overlap, tile_id=tile)
        write_raster(target, prob)
    except (OSError, ValueError) as exc:
        return "failed", str(exc)
    return "done", None


def run_infer(cfg: PipelineConfig) -> StageResult:
    """Probability raster per imagery tile."""
    return _run_tiles(cfg, _infer_tile, _tile_ids(cfg.inp / "imagery"))


# ---- detect ----------------------------------------------------------------

def _detect_tile(cfg: PipelineConfig, tile: str):
    unfiltered = cfg.out / "objects" / f"{tile}.geojson"
    kept_path = cfg.out / "filtered" / f"{tile}.geojson"
    if unfiltered.exists() and kept_path.exists():
        return "skipped", None
    try:
        prob = read_raster(cfg.out / "prob" / f"{tile}.json")
        objs = objects.extract_objects(prob, cfg.tau, tile)
        road_file = cfg.inp / "roads" / f"{tile}.roads.geojson"
        if road_file.exists():
            net = roads.read_roads(road_file, tile)
        else:
            log.warning("tile %s: no roads file, road rule passes every object", tile)
            net = None
        roads.annotate_road_distance(objs, net, cfg.split_length)
        rules = cfg.rule_set()
        verdicts = [filtering.classify(o, rules) for o in objs]
        extra = [{"status": "barn" if v.is_barn else "background", "reason": v.reason} for v in verdicts]
        kept = [o for o, v in zip(objs, verdicts) if v.is_barn]
        objects.write_geojson(unfiltered, objects.objects_to_geojson(objs, extra))
        objects.write_geojson(kept_path, objects.objects_to_geojson(kept))
    except (OSError, ValueError) as exc:
        return "failed", str(exc)
    return "done", None


def run_detect(cfg: PipelineConfig) -> StageResult:
    """Unfiltered objects (with rejection reasons) and filtered barns per tile."""
    return _run_tiles(cfg, _detect_tile, _tile_ids(cfg.out / "prob"))


# ---- eval ------------------------------------------------------------------

def _label_sets(cfg: PipelineConfig, tile: str, prob) -> list:
    shape = (prob.height, prob.width)
    label_file = cfg.inp / "labels" / f"{tile}.geojson"
    if label_file.exists():
        rings = [o.polygon for o in objects.read_geojson(label_file)]
        return [evaluate.rasterize_polygon(r, prob.geo, shape) for r in rings]
    mask = read_raster(cfg.inp / "masks" / f"{tile}.json")
    return [c.pixels for c in objects.connected_components(mask, tile)]


def _pred_sets(path: Path, prob) -> tuple[list, list]:
    objs = objects.read_geojson(path)
    shape = (prob.height, prob.width)
    for o in objs:
        o.pixels = evaluate.rasterize_polygon(o.polygon, prob.geo, shape)
    return objs, [o.object_id for o in objs]


def evaluate_tile(cfg: PipelineConfig, tile: str, stage: str = "filtered") -> evaluate.MatchReport:
    prob = read_raster(cfg.out / "prob" / f"{tile}.json")
    preds, _ = _pred_sets(cfg.out / stage / f"{tile}.geojson", prob)
    label_pixels = _label_sets(cfg, tile, prob)
    labels = [
        objects.DetectedObject(np.empty((0, 2)), 0, 1, 0, 0, tile_id=tile,
                               object_id=f"{tile}:label:{k}", pixels=p)
        for k, p in enumerate(label_pixels)
    ]
    return evaluate.match_objects(preds, labels, cfg.iou_threshold)


def _read_polygons(path: Path, with_class: bool = False):
    data = json.loads(path.read_text())
    out = []
    for feat in data.get("features", []):
        geom = feat["geometry"]
        polys = [geom["coordinates"]] if geom["type"] == "Polygon" else geom["coordinates"]
        for poly in polys:
            ring = np.asarray(poly[0], dtype=float)
            if with_class:
                out.append((ring, (feat.get("properties") or {}).get("class", "empty")))
            else:
                out.append(ring)
    return out


def run_eval(cfg: PipelineConfig) -> dict:
    """Match filtered and unfiltered detections against labels; optional facility validation."""
    tiles = _tile_ids(cfg.out / "prob")
    reports = {}
    for stage in ("filtered", "objects"):
        per_tile = [evaluate_tile(cfg, t, stage) for t in tiles]
        merged = evaluate.merge_reports(per_tile)
        name = "eval" if stage == "filtered" else "eval_unfiltered"
        reports[name] = merged.to_json()
        atomic_write_bytes(cfg.out / "reports" / f"{name}.json", (json.dumps(reports[name]) + "\n").encode())

    fac_file = cfg.inp / "facilities.geojson"
    if fac_file.exists():
        preds = []
        for t in tiles:
            preds.extend(objects.read_geojson(cfg.out / "filtered" / f"{t}.geojson"))
        area_file = cfg.inp / "validated_area.geojson"
        area = _read_polygons(area_file) if area_file.exists() else None
        fac = evaluate.facility_validation(preds, _read_polygons(fac_file, True), area, cfg.radius)
        reports["facility"] = fac.to_json()
        atomic_write_bytes(cfg.out / "reports" / "facility.json", (json.dumps(reports["facility"]) + "\n").encode())
    return reports


# ---- ucb -------------------------------------------------------------------

def run_ucb(cfg: PipelineConfig) -> list[dict]:
    """Simulated or batch-labelled validation campaign; one JSON line per round."""
    scores = json.loads((cfg.inp / "scores.json").read_text())
    truth = json.loads((cfg.inp / "truth.json").read_text())
    state = ucb.new_campaign(scores, alpha=cfg.ucb_alpha, seed=cfg.seed, k=cfg.ucb_buckets)

    def oracle(image):
        if image not in truth:
            raise KeyError(f"no label for image {image!r} in truth.json")
        return bool(truth[image])

    target = cfg.out / "reports" / "ucb_log.jsonl"
    target.parent.mkdir(parents=True, exist_ok=True)
    records = ucb.run_campaign(state, cfg.ucb_m, oracle, cfg.ucb_max_rounds, cfg.ucb_estimator)
    atomic_write_bytes(target, "".join(json.dumps(r) + "\n" for r in records).encode())
    return records


# ---- census ----------------------------------------------------------------

def run_census(cfg: PipelineConfig) -> dict:
    records = census.read_county_csv(cfg.inp / "counties.csv")
    bounds_file = cfg.inp / "counties.geojson"
    filtered_dir = cfg.out / "filtered"
    if bounds_file.exists() and filtered_dir.is_dir():
        objs = []
        for t in _tile_ids(filtered_dir, "*.geojson"):
            objs.extend(objects.read_geojson(filtered_dir / f"{t}.geojson"))
        counts = census.aggregate_by_county(objs, census.read_county_boundaries(bounds_file))
        records = [replace(r, predicted_barns=counts.get(r.fips, 0)) for r in records]
    thresholds = sorted({t for r in records for t in r.census_operations})
    sweep = census.threshold_sweep(records, thresholds)
    cv = census.cv_subset_sweep(records, list(cfg.cv_cutoffs))
    report = {
        "n_counties": len(records),
        "rho_10000": sweep.get(10000),
        "threshold_sweep": {str(k): v for k, v in sweep.items()},
        "cv_sweep": {str(k): v for k, v in cv.items()},
    }
    atomic_write_bytes(cfg.out / "reports" / "census.json", (json.dumps(report) + "\n").encode())
    return report


# ---- roads-index -----------------------------------------------------------

def _index_tile(cfg: PipelineConfig, tile: str):
    target = cfg.out / "roads_index" / f"{tile}.nodes.json"
    if target.exists():
        return "skipped", None
    try:
        net = roads.read_roads(cfg.inp / "roads" / f"{tile}.roads.geojson", tile)
        idx = roads.split_edges(net, cfg.split_length)
        payload = {
            "tile": tile,
            "d": idx.split_length,
            "edges": net.edge_ids,
            "nodes": [[float(x), float(y), int(e)] for (x, y), e in zip(idx.nodes, idx.node_edge)],
        }
        atomic_write_bytes(target, (json.dumps(payload) + "\n").encode())
    except (OSError, ValueError) as exc:
        return "failed", str(exc)
    return "done", None


def run_roads_index(cfg: PipelineConfig) -> StageResult:
    tiles = [name.removesuffix(".roads") for name in _tile_ids(cfg.inp / "roads", "*.roads.geojson")]
    return _run_tiles(cfg, _index_tile, tiles)


# ---- sample ----------------------------------------------------------------

_HISTORY = re.compile(r"^(?P<tile>.+)\.(?P<year>\d{4})$")


def run_sample(cfg: PipelineConfig) -> list:
    tiles, ids = [], []
    history: dict[str, dict[int, Path]] = {}
    for stem in _tile_ids(cfg.inp / "history"):
        m = _HISTORY.match(stem)
        if m:
            history.setdefault(m["tile"], {})[int(m["year"])] = cfg.inp / "history" / f"{stem}.json"
    years_file = cfg.inp / "construction_years.json"
    construction = json.loads(years_file.read_text()) if years_file.exists() else {}

    for tile in _tile_ids(cfg.inp / "imagery"):
        imagery = read_raster(cfg.inp / "imagery" / f"{tile}.json")
        mask = read_raster(cfg.inp / "masks" / f"{tile}.json")
        t = imagery.timestamp
        if t is None:
            raise RasterError(f"tile {tile}: imagery has no timestamp")
        pairing = sampler.TemporalPairing(
            cfg.temporal, t, sorted(history.get(tile, {})), construction.get(tile, {})
        )
        for year, valid in sampler.temporal_pairs(tile, pairing):
            if not valid:
                continue
            img = imagery if year == t else read_raster(history[tile][year])
            tiles.append((img, mask))
            ids.append(tile)
    sc = sampler.SamplerConfig(
        alpha=cfg.alpha, patch_size=cfg.patch_size, n_samples=cfg.n_samples,
        rotation_step=cfg.rotation_step, seed=cfg.seed,
    )
    samples = sampler.sample_patches(tiles, sc, ids)
    sampler.write_manifest(cfg.out / "manifest.jsonl", samples)
    return samples
