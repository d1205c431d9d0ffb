import numpy as np
import pytest
from scipy.stats import chisquare

from phenom.core.exceptions import DimensionMismatchError
from phenom.imaging.preprocessing import augment_flips, center_crop, random_crop, self_standardize, tile_image
from phenom.imaging.well_image import Crop


def test_constant_channel_standardizes_to_zero():
    crop = Crop(pixels=np.full((8, 8, 2), 5.0, dtype=np.float32))
    out = self_standardize(crop)
    assert np.all(out.pixels == 0.0)
    assert out.standardized


def test_two_point_channel_maps_to_plus_minus_one():
    pixels = np.zeros((4, 4, 1), dtype=np.float32)
    pixels[::2] = 2.0
    out = self_standardize(Crop(pixels=pixels)).pixels
    assert set(np.unique(out).tolist()) == {-1.0, 1.0}


def test_random_channel_has_unit_statistics():
    rng = np.random.default_rng(0)
    out = self_standardize(Crop(pixels=rng.uniform(0, 10, (64, 64, 3)).astype(np.float32))).pixels
    assert np.all(np.abs(out.mean(axis=(0, 1))) < 1e-5)
    assert np.all(np.abs(out.std(axis=(0, 1)) - 1.0) < 1e-3)


def test_standardize_is_idempotent():
    rng = np.random.default_rng(1)
    once = self_standardize(Crop(pixels=rng.normal(3, 2, (16, 16, 2)).astype(np.float32)))
    twice = self_standardize(once)
    np.testing.assert_allclose(once.pixels, twice.pixels, atol=1e-5)


def test_tile_2048_into_64_crops(make_well):
    image = make_well(np.zeros((2048, 2048), dtype=np.float32))
    assert len(tile_image(image, 256)) == 64


def test_single_tile_equals_standardized_image(make_well):
    rng = np.random.default_rng(2)
    image = make_well(rng.uniform(size=(64, 64, 2)))
    (crop,) = tile_image(image, 64)
    np.testing.assert_array_equal(crop.pixels, self_standardize(Crop(pixels=image.pixels)).pixels)


def test_tiles_reassemble_the_image(make_well):
    rng = np.random.default_rng(3)
    image = make_well(rng.uniform(size=(64, 64, 1)))
    crops = tile_image(image, 32)
    assert [c.provenance[1:] for c in crops] == [(0, 0), (0, 32), (32, 0), (32, 32)]
    for crop in crops:
        _, row, col = crop.provenance
        window = image.pixels[row:row + 32, col:col + 32]
        np.testing.assert_array_equal(crop.pixels, self_standardize(Crop(pixels=window)).pixels)


@pytest.mark.parametrize("h,w,s", [(64, 64, 16), (96, 32, 32), (48, 48, 48)])
def test_tile_count(make_well, h, w, s):
    image = make_well(np.zeros((h, w), dtype=np.float32))
    assert len(tile_image(image, s)) == (h // s) * (w // s)


def test_tile_rejects_indivisible_size(make_well):
    with pytest.raises(DimensionMismatchError):
        tile_image(make_well(np.zeros((100, 100))), 64)


def test_full_size_random_crop_has_zero_offset(make_well):
    image = make_well(np.random.default_rng(4).uniform(size=(32, 32)), well_id="wx")
    assert random_crop(image, 32, seed=123).provenance == ("wx", 0, 0)


def test_random_crop_is_deterministic(make_well):
    image = make_well(np.random.default_rng(5).uniform(size=(64, 64, 2)))
    a, b = random_crop(image, 16, seed=9), random_crop(image, 16, seed=9)
    assert a.provenance == b.provenance
    np.testing.assert_array_equal(a.pixels, b.pixels)


def test_random_crop_offsets_are_uniform(make_well):
    image = make_well(np.zeros((40, 40), dtype=np.float32))
    rows = np.array([random_crop(image, 32, seed=s).provenance[1] for s in range(10000)])
    counts = np.bincount(rows, minlength=9)
    assert counts.size == 9
    assert chisquare(counts).pvalue > 1e-3


def test_random_crop_too_large(make_well):
    with pytest.raises(DimensionMismatchError):
        random_crop(make_well(np.zeros((16, 16))), 17, seed=0)


def test_center_crop_position(make_well):
    image = make_well(np.zeros((40, 40)))
    assert center_crop(image, 16).provenance[1:] == (12, 12)


def test_flips_are_involutions():
    rng = np.random.default_rng(6)
    crop = Crop(pixels=rng.normal(size=(8, 8, 3)).astype(np.float32))
    for seed in range(20):
        np.testing.assert_array_equal(augment_flips(augment_flips(crop, seed), seed).pixels, crop.pixels)


def _marker_position(crop: Crop) -> tuple:
    return tuple(int(i) for i in np.argwhere(crop.pixels[:, :, 0] == 1.0)[0])


def test_vertical_flip_moves_marker_down():
    s = 8
    pixels = np.zeros((s, s, 2), dtype=np.float32)
    pixels[0, 0, 0] = 1.0
    crop = Crop(pixels=pixels)
    seed = next(
        s_ for s_ in range(1000)
        if tuple(np.random.default_rng(s_).random(2) < 0.5) == (True, False)
    )
    out = augment_flips(crop, seed)
    assert _marker_position(out) == (s - 1, 0)
    # channel axis untouched
    assert np.all(out.pixels[:, :, 1] == 0.0)


def test_flip_outcomes_are_balanced():
    s = 4
    pixels = np.zeros((s, s, 1), dtype=np.float32)
    pixels[0, 0, 0] = 1.0
    crop = Crop(pixels=pixels)
    outcomes = {}
    n = 10000
    for seed in range(n):
        pos = _marker_position(augment_flips(crop, seed))
        outcomes[pos] = outcomes.get(pos, 0) + 1
    assert set(outcomes) == {(0, 0), (s - 1, 0), (0, s - 1), (s - 1, s - 1)}
    for count in outcomes.values():
        assert abs(count / n - 0.25) < 0.02
