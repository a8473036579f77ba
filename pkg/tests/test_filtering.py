from __future__ import annotations

import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from barnscan.evaluate import match_objects
from barnscan.filtering import (
    DEFAULT_RULES,
    REASONS,
    RuleSet,
    classify,
    default_rules,
    derive_rules,
    filter_objects,
)
from barnscan.objects import DetectedObject, extract_objects
from barnscan.raster import RasterTile
from barnscan.roads import annotate_road_distance
from barnscan.synthetic import make_world

RING = np.array([[0, 0], [1, 0], [1, 1], [0, 1], [0, 0]], float)


def obj(area, aspect, road=50.0, oid=""):
    return DetectedObject(RING, area, aspect, 0.0, 1.0, 2017, road, None, "", oid)


def test_classify_examples():
    assert classify(obj(2170, 11.07), DEFAULT_RULES) == (True, None)
    assert classify(obj(400, 8), DEFAULT_RULES) == (False, "area-below-min")
    assert classify(obj(2000, 8, 0.0), DEFAULT_RULES) == (False, "road-intersection")
    assert classify(obj(9000, 8), DEFAULT_RULES).reason == "area-above-max"
    assert classify(obj(2000, 3), DEFAULT_RULES).reason == "aspect-below-min"
    assert classify(obj(2000, 25), DEFAULT_RULES).reason == "aspect-above-max"
    # first failure wins: area is checked before aspect and road
    assert classify(obj(100, 100, 0.0), DEFAULT_RULES).reason == "area-below-min"
    assert classify(obj(2000, 100, 0.0), DEFAULT_RULES).reason == "aspect-above-max"


def test_inclusive_bounds():
    for area in (525.0, 8106.0):
        assert classify(obj(area, 3.4), DEFAULT_RULES).is_barn
        assert classify(obj(area, 20.49), DEFAULT_RULES).is_barn
    assert not classify(obj(math.nextafter(525.0, 0), 5), DEFAULT_RULES).is_barn
    assert not classify(obj(math.nextafter(8106.0, 1e9), 5), DEFAULT_RULES).is_barn


def test_road_buffer_and_missing_distance():
    rules = RuleSet((525, 8106), (3.4, 20.49), road_buffer=10.0)
    assert classify(obj(2000, 8, 10.0), rules).reason == "road-intersection"
    assert classify(obj(2000, 8, 10.5), rules).is_barn
    assert classify(obj(2000, 8, math.inf), DEFAULT_RULES).is_barn
    with pytest.raises(ValueError, match="road"):
        classify(obj(2000, 8, None), DEFAULT_RULES)


def test_derive_rules_examples():
    r = derive_rules([obj(2000, 8)])
    assert r.area_range == (2000, 2000) and r.aspect_range == (8, 8) and r.road_buffer == 0
    r = derive_rules([obj(600, 4), obj(3000, 12), obj(8000, 6)])
    assert r.area_range == (600, 8000) and r.aspect_range == (4, 12)
    with pytest.raises(ValueError):
        derive_rules([])


def test_derive_rules_recovers_generator_bounds():
    rng = np.random.default_rng(0)
    labelled = [obj(a, s) for a, s in zip(rng.uniform(525, 8106, 300), rng.uniform(3.4, 20.49, 300))]
    labelled += [obj(525, 10), obj(8106, 10), obj(3000, 3.4), obj(3000, 20.49)]
    r = derive_rules(labelled)
    assert r.area_range == (525, 8106) and r.aspect_range == (3.4, 20.49)
    # derived rules accept every training object
    assert all(classify(o, r).is_barn for o in labelled)


def test_ruleset_validation_and_json(tmp_path):
    with pytest.raises(ValueError):
        RuleSet((10, 5), (1, 2))
    with pytest.raises(ValueError):
        RuleSet((-1, 5), (1, 2))
    with pytest.raises(ValueError):
        RuleSet((1, 5), (1, 2), -3)
    with pytest.raises(ValueError):
        RuleSet.from_json({"area_m2": [1, 2]})
    assert DEFAULT_RULES.to_json() == {"area_m2": [525.0, 8106.0], "aspect": [3.4, 20.49], "road_buffer_m": 0.0}
    DEFAULT_RULES.save(tmp_path / "r.json")
    assert RuleSet.load(tmp_path / "r.json") == DEFAULT_RULES
    assert default_rules() == DEFAULT_RULES


def test_filter_partition_examples():
    assert filter_objects([], DEFAULT_RULES) == ([], [])
    good = [obj(1000 + k, 5 + k, oid=str(k)) for k in range(5)]
    assert filter_objects(good, DEFAULT_RULES) == (good, [])


@settings(max_examples=100, deadline=None)
@given(
    st.lists(
        st.tuples(st.floats(0, 12000), st.floats(1, 30), st.floats(0, 200)),
        max_size=30,
    )
)
def test_filter_is_ordered_partition(features):
    objs = [obj(a, s, d, str(k)) for k, (a, s, d) in enumerate(features)]
    kept, rejected = filter_objects(objs, DEFAULT_RULES)
    assert len(kept) + len(rejected) == len(objs)
    ids = [o.object_id for o in kept]
    assert ids == sorted(ids, key=int)
    assert all(reason in REASONS for _, reason in rejected)
    assert set(ids).isdisjoint(o.object_id for o, _ in rejected)


def test_synthetic_world_reason_counts_and_tp():
    for tile in make_world(n_tiles=4, seed=21):
        prob = RasterTile(tile.detector_mask.band.astype(np.float32), tile.detector_mask.geo, 2017)
        objs = annotate_road_distance(extract_objects(prob, tile_id=tile.tile_id), tile.roads)
        kept, rejected = filter_objects(objs, DEFAULT_RULES)
        got = Counter(reason for _, reason in rejected)
        assert got == Counter({k: v for k, v in tile.clutter.items() if v})
        labels = extract_objects(
            RasterTile(tile.label_mask.band.astype(np.float32), tile.label_mask.geo), tile_id="L"
        )
        before = match_objects(objs, labels).true_positives
        after = match_objects(kept, labels).true_positives
        assert after <= before
        assert after == len(labels)
