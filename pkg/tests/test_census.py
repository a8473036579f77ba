from __future__ import annotations

import json
import math

import numpy as np
import pytest
import shapely
from hypothesis import given, settings
from hypothesis import strategies as st

from barnscan.census import (
    UNASSIGNED,
    CountyRecord,
    aggregate_by_county,
    cv_subset_sweep,
    read_county_boundaries,
    read_county_csv,
    spearman,
    threshold_sweep,
)
from oracles import spearman_tie_corrected


def box(x0, y0, x1, y1):
    return np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1], [x0, y0]], float)


def small(cx, cy):
    return box(cx - 1, cy - 1, cx + 1, cy + 1)


# aggregation


def test_aggregate_examples():
    counties = {"A": [box(0, 0, 100, 100)], "B": [box(100, 0, 200, 100)]}
    got = aggregate_by_county([small(50, 50), small(150, 20), small(500, 500)], counties)
    assert got == {"A": 1, "B": 1, UNASSIGNED: 1}
    assert aggregate_by_county([], counties) == {"A": 0, "B": 0, UNASSIGNED: 0}


def test_aggregate_with_hole_and_overlap(caplog):
    donut = [box(0, 0, 100, 100), box(40, 40, 60, 60)]
    assert aggregate_by_county([small(50, 50), small(10, 10)], {"D": donut}) == {"D": 1, UNASSIGNED: 1}
    overlap = {"first": [box(0, 0, 10, 10)], "second": [box(5, 5, 20, 20)]}
    with caplog.at_level("WARNING"):
        assert aggregate_by_county([small(7, 7)], overlap)["first"] == 1
    assert "overlapping" in caplog.text


def test_aggregate_against_containment_oracle():
    rng = np.random.default_rng(0)
    # two counties sharing a zig-zag border
    west = np.array([[0, 0], [500, 0], [400, 250], [600, 500], [450, 750], [500, 1000], [0, 1000], [0, 0]], float)
    east = np.array([[500, 0], [1000, 0], [1000, 1000], [500, 1000], [450, 750], [600, 500], [400, 250], [500, 0]], float)
    counties = {"W": [west], "E": [east]}
    centers = rng.uniform(-100, 1100, (3000, 2))
    got = aggregate_by_county([small(x, y) for x, y in centers], counties)
    pts = shapely.points(centers)
    want_w = int(shapely.contains(shapely.Polygon(west), pts).sum())
    want_e = int(shapely.contains(shapely.Polygon(east), pts).sum())
    assert (got["W"], got["E"]) == (want_w, want_e)
    assert got[UNASSIGNED] == 3000 - want_w - want_e


# rank correlation


def test_spearman_examples():
    assert spearman([1, 2, 3, 4], [2, 5, 9, 100]) == 1.0
    assert spearman([1, 2, 3, 4], [9, 5, 2, 0]) == -1.0
    x, y = (1, 2, 2, 4), (10, 20, 30, 40)
    assert spearman(x, y) == pytest.approx(spearman_tie_corrected(x, y), abs=1e-15)
    assert spearman(x, y) == pytest.approx(0.9486832980505138, abs=1e-15)
    for bad in (([1, 2], [1, 2, 3]), ([1], [1]), ([1, 1, 1], [1, 2, 3])):
        with pytest.raises(ValueError):
            spearman(*bad)


@settings(max_examples=200, deadline=None)
@given(
    st.lists(st.tuples(st.integers(0, 6), st.integers(0, 6)), min_size=3, max_size=40),
)
def test_spearman_matches_definition(pairs):
    x, y = [p[0] for p in pairs], [p[1] for p in pairs]
    if len(set(x)) < 2 or len(set(y)) < 2:
        return
    rho = spearman(x, y)
    assert rho == pytest.approx(spearman_tie_corrected(x, y), abs=1e-12)
    assert -1 <= rho <= 1
    # strictly increasing transforms leave the ranks alone
    assert spearman([math.exp(v) for v in x], [3 * v**3 + 1 for v in y]) == pytest.approx(rho, abs=1e-12)
    assert spearman(x, x) == pytest.approx(1.0, abs=1e-12)


def test_null_correlation_is_small():
    rng = np.random.default_rng(17)
    assert abs(spearman(rng.poisson(20, 500), rng.poisson(20, 500))) < 0.2


# sweeps


def _records(rng, n=300):
    size = rng.gamma(2.0, 50.0, n)
    cv = rng.uniform(0, 1, n)
    recs = []
    for k in range(n):
        large = rng.poisson(size[k] / 10)
        small_ops = rng.poisson(size[k]) + rng.poisson(60)  # small size classes are mostly noise
        barns = max(0, int(round(large * 3 + rng.normal(0, 8 * cv[k]))))
        recs.append(CountyRecord(f"{k:05d}", barns, {400: small_ops, 10000: large}, float(cv[k])))
    return recs


def test_threshold_sweep():
    rng = np.random.default_rng(1)
    exact = [CountyRecord(str(k), v, {10000: v, 400: int(rng.integers(0, 50))}) for k, v in enumerate(rng.integers(0, 90, 60))]
    assert threshold_sweep(exact, [10000])[10000] == 1.0
    rho = threshold_sweep(_records(rng), [400, 10000])
    assert max(rho, key=rho.get) == 10000
    with pytest.raises(ValueError, match="missing"):
        threshold_sweep(exact, [100])


def test_masked_cells_dropped_pairwise():
    recs = [CountyRecord("a", 1, {10: 1}), CountyRecord("b", 2, {10: None}), CountyRecord("c", 3, {10: 3}),
            CountyRecord("d", 4, {10: 2})]
    assert threshold_sweep(recs, [10])[10] == pytest.approx(spearman([1, 3, 4], [1, 3, 2]))


def test_cv_sweep():
    rng = np.random.default_rng(2)
    recs = _records(rng, 600)
    cuts = [-1.0, 0.2, 0.4, 0.6, 0.8, math.inf]
    rho = cv_subset_sweep(recs, cuts, 10000)
    assert rho[-1.0] is None
    assert rho[math.inf] == pytest.approx(spearman([r.predicted_barns for r in recs],
                                                   [r.census_operations[10000] for r in recs]))
    vals = [rho[c] for c in cuts[1:]]
    assert all(a > b for a, b in zip(vals, vals[1:]))
    with pytest.raises(ValueError):
        cv_subset_sweep(recs, [0.5, 0.1])
    # default column is the smallest size class
    assert cv_subset_sweep(recs, [math.inf])[math.inf] == pytest.approx(
        spearman([r.predicted_barns for r in recs], [r.census_operations[400] for r in recs]))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 2), min_size=1, max_size=6))
def test_cv_subsets_nest(cuts):
    cuts = sorted(cuts)
    rng = np.random.default_rng(len(cuts))
    recs = _records(rng, 40)
    subsets = [{r.fips for r in recs if r.cv <= c} for c in cuts]
    for a, b in zip(subsets, subsets[1:]):
        assert a <= b
    rho = cv_subset_sweep(recs, cuts, 10000)
    for c, s in zip(cuts, subsets):
        if len(s) < 2:
            assert rho[c] is None
        else:
            sub = [r for r in recs if r.fips in s]
            x = [r.predicted_barns for r in sub]
            y = [r.census_operations[10000] for r in sub]
            defined = len(set(x)) > 1 and len(set(y)) > 1
            assert (rho[c] is not None) == defined


def test_record_validation():
    with pytest.raises(ValueError):
        CountyRecord("x", -1)
    with pytest.raises(ValueError):
        CountyRecord("x", 1, cv=-0.1)


def test_csv_and_boundaries(tmp_path):
    (tmp_path / "c.csv").write_text(
        "fips,predicted_barns,ops_400,ops_10000,cv\n"
        "10001,12,30,4,0.1\n"
        "10003,0,(D),,\n"
        "10005,7,12,NA,0.35\n"
    )
    recs = read_county_csv(tmp_path / "c.csv")
    assert [r.fips for r in recs] == ["10001", "10003", "10005"]
    assert recs[0].census_operations == {400: 30, 10000: 4} and recs[0].cv == 0.1
    assert recs[1].census_operations == {400: None, 10000: None} and recs[1].cv is None
    assert recs[2].census_operations[10000] is None
    (tmp_path / "bad.csv").write_text("county,barns\n1,2\n")
    with pytest.raises(ValueError):
        read_county_csv(tmp_path / "bad.csv")

    fc = {"type": "FeatureCollection", "features": [
        {"type": "Feature", "properties": {"fips": "10001"},
         "geometry": {"type": "Polygon", "coordinates": [box(0, 0, 10, 10).tolist()]}},
        {"type": "Feature", "properties": {"fips": "10003"},
         "geometry": {"type": "MultiPolygon", "coordinates": [[box(20, 0, 30, 10).tolist()], [box(40, 0, 50, 10).tolist()]]}},
    ]}
    (tmp_path / "c.geojson").write_text(json.dumps(fc))
    bounds = read_county_boundaries(tmp_path / "c.geojson")
    assert len(bounds["10001"]) == 1 and len(bounds["10003"]) == 2
    got = aggregate_by_county([small(5, 5), small(45, 5), small(25, 5)], bounds)
    assert got == {"10001": 1, "10003": 2, UNASSIGNED: 0}
