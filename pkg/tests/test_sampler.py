from __future__ import annotations

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from barnscan.raster import Geotransform, RasterTile
from barnscan.sampler import (
    PatchSample,
    SamplerConfig,
    TemporalPairing,
    apply_augmentation,
    iter_candidates,
    read_manifest,
    sample_patches,
    temporal_pairs,
    write_manifest,
)


def _pair(mask, year=2017):
    mask = np.asarray(mask, np.uint8)
    img = RasterTile(np.zeros((4, *mask.shape), np.uint8), Geotransform(), year)
    return img, RasterTile(mask, Geotransform(), year)


def test_alpha_zero_keeps_everything():
    tiles = [_pair(np.zeros((128, 128)))]
    stream = iter_candidates(tiles, SamplerConfig(alpha=0.0, patch_size=32))
    assert all(keep for _, keep in itertools.islice(stream, 2000))


def test_high_alpha_balances_rare_positives():
    rng = np.random.default_rng(0)
    mask = np.zeros((1000, 1000), np.uint8)
    # 0.1% positive pixels, clustered in a few small blobs
    for r, c in rng.integers(0, 990, (10, 2)):
        mask[r : r + 10, c : c + 10] = 1
    tiles = [_pair(mask)]

    def share(alpha):
        s = sample_patches(tiles, SamplerConfig(alpha=alpha, patch_size=32, n_samples=2000, seed=1))
        return np.mean([p.positive for p in s])

    low, high = share(0.0), share(0.999)
    assert high > 0.3 and high > 5 * low


def test_positive_flag_matches_mask():
    rng = np.random.default_rng(5)
    mask = (rng.random((200, 150)) < 0.0005).astype(np.uint8)
    cfg = SamplerConfig(alpha=0.3, patch_size=40, n_samples=500, seed=2)
    out = sample_patches([_pair(mask)], cfg, ["t0"])
    assert len(out) == 500
    for s in out:
        assert s.tile == "t0" and s.year == 2017
        assert 0 <= s.row <= 160 and 0 <= s.col <= 110
        assert s.positive == bool(mask[s.row : s.row + 40, s.col : s.col + 40].any())
        assert s.rotation in (0, 90, 180, 270)


def test_forty_five_degree_rotations_offered():
    cfg = SamplerConfig(patch_size=16, n_samples=400, rotation_step=45)
    rots = {s.rotation for s in sample_patches([_pair(np.zeros((32, 32)))], cfg)}
    assert rots == set(range(0, 360, 45))


def test_sampler_errors():
    with pytest.raises(ValueError):
        SamplerConfig(alpha=1.0)
    with pytest.raises(ValueError):
        sample_patches([_pair(np.zeros((100, 100)))], SamplerConfig(n_samples=3))
    img, _ = _pair(np.zeros((300, 300)))
    with pytest.raises(ValueError, match="differ"):
        sample_patches([(img, RasterTile(np.zeros((300, 299), np.uint8)))], SamplerConfig(n_samples=3))
    assert sample_patches([_pair(np.zeros((10, 10)))], SamplerConfig(n_samples=0)) == []


def test_sampler_deterministic():
    tiles = [_pair(np.eye(300)), _pair(np.zeros((300, 300)))]
    cfg = SamplerConfig(alpha=0.5, n_samples=50, seed=9)
    assert sample_patches(tiles, cfg) == sample_patches(tiles, cfg)


def test_temporal_single_and_errors():
    t = 2017
    p = TemporalPairing("single", t, [t - 1, t])
    assert temporal_pairs("x", p) == [(t, True)]
    with pytest.raises(ValueError):
        TemporalPairing("sometimes", t)
    aug = TemporalPairing("augmented", t, [t - 1], {"a": t - 3})
    with pytest.raises(ValueError, match="construction"):
        temporal_pairs("x", aug, ["a", "b"])


@settings(max_examples=100, deadline=None)
@given(
    t=st.integers(2000, 2030),
    offsets=st.sets(st.integers(1, 8), max_size=6),
    built=st.lists(st.integers(-10, 2), max_size=4),
)
def test_temporal_subsets_nest(t, offsets, built):
    years = [t - k for k in offsets]
    cy = {f"b{i}": t + d for i, d in enumerate(built)}

    def valid(mode):
        return {y for y, ok in temporal_pairs("x", TemporalPairing(mode, t, years, cy)) if ok}

    single, every, aug = valid("single"), valid("all"), valid("augmented")
    assert aug <= every and single <= every
    assert every == set(years) | {t}
    for y in every:
        assert (y in aug) == all(c <= y for c in cy.values())


def _random_patch(seed, size=9, bands=2):
    rng = np.random.default_rng(seed)
    return RasterTile(rng.integers(0, 256, (bands, size, size)).astype(np.uint8))


def test_augmentation_identities():
    p = _random_patch(0)
    assert np.array_equal(apply_augmentation(p, PatchSample("t", 0, 0)).data, p.data)
    half = PatchSample("t", 0, 0, rotation=180)
    assert np.array_equal(apply_augmentation(apply_augmentation(p, half), half).data, p.data)
    quarter = PatchSample("t", 0, 0, rotation=90)
    q = p
    for _ in range(4):
        q = apply_augmentation(q, quarter)
    assert np.array_equal(q.data, p.data)
    # counter-clockwise: the top-right corner moves to the top-left
    assert apply_augmentation(p, quarter).data[0, 0, 0] == p.data[0, 0, -1]
    h = PatchSample("t", 0, 0, hflip=True)
    assert np.array_equal(apply_augmentation(p, h).data, p.data[:, :, ::-1])


@settings(max_examples=60, deadline=None)
@given(
    seed=st.integers(0, 10**6),
    rot=st.sampled_from([0, 90, 180, 270]),
    hflip=st.booleans(),
    vflip=st.booleans(),
)
def test_permutations_preserve_values(seed, rot, hflip, vflip):
    p = _random_patch(seed, 12)
    out = apply_augmentation(p, PatchSample("t", 0, 0, rotation=rot, hflip=hflip, vflip=vflip))
    for b in range(p.bands):
        assert np.array_equal(np.sort(out.data[b], axis=None), np.sort(p.data[b], axis=None))


def test_diagonal_rotation_of_padded_crop():
    big = np.zeros((1, 46, 46), np.uint8)
    big[0, 20:26, 10:36] = 1  # horizontal bar through the centre
    out = apply_augmentation(RasterTile(big), PatchSample("t", 0, 0, rotation=45), out_size=32)
    band = out.band
    assert band.shape == (32, 32)
    assert set(np.unique(band)) <= {0, 1}
    rr, cc = np.nonzero(band)
    # bar now runs along the anti-diagonal direction (up-right)
    slope = np.polyfit(cc, -rr, 1)[0]
    assert 0.8 < slope < 1.25
    # the padded crop leaves no empty corners for a full image
    full = apply_augmentation(RasterTile(np.ones((1, 46, 46), np.uint8)), PatchSample("t", 0, 0, rotation=45), 32)
    assert full.band.all()


def test_rotation_needs_square():
    with pytest.raises(ValueError):
        apply_augmentation(RasterTile(np.zeros((1, 4, 5), np.uint8)), PatchSample("t", 0, 0, rotation=90))


def test_manifest_round_trip(tmp_path):
    samples = sample_patches([_pair(np.eye(64))], SamplerConfig(patch_size=16, n_samples=25, seed=3), ["a"])
    write_manifest(tmp_path / "m.jsonl", samples)
    assert read_manifest(tmp_path / "m.jsonl") == samples
    import json

    first = json.loads((tmp_path / "m.jsonl").read_text().splitlines()[0])
    assert set(first) == {"tile", "row", "col", "year", "rot", "hflip", "vflip", "positive"}
