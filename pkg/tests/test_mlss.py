import numpy as np
import pytest

from starseg.imagecore import ImageGrid
from starseg.mlss import level_response, segment_all, segment_level
from starseg.phantom import PhantomParams, make_phantom
from starseg.starlet import StarletDecomposition, decompose

pytestmark = pytest.mark.filterwarnings("ignore:kernel span:RuntimeWarning")


def naive_mask(image, decomposition, i, rule):
    """Per-pixel scalar evaluation of the level rule."""
    h, w = image.shape
    out = np.zeros((h, w), dtype=bool)
    for y in range(h):
        for x in range(w):
            total = float(decomposition.details[2][y, x])
            for j in range(4, i + 1):
                total += float(decomposition.details[j - 1][y, x])
            if rule == "literal":
                total = total - float(image[y, x])
            out[y, x] = total > 0.0
    return out


@pytest.fixture(scope="module")
def small_phantom():
    params = PhantomParams(size=(48, 40), n_blobs=6, diameter_range=(8.0, 14.0))
    return make_phantom(7, params)


@pytest.mark.parametrize("rule", ["detail", "literal"])
def test_constant_image_is_background(rule):
    img = ImageGrid(np.full((16, 16), 0.4))
    for i, mask in segment_all(img, 6, rule=rule).masks.items():
        assert mask.foreground_count == 0, i


@pytest.mark.parametrize("rule", ["detail", "literal"])
def test_zero_image_is_background(rule):
    img = ImageGrid(np.zeros((8, 8)))
    assert all(m.foreground_count == 0 for m in segment_all(img, 4, rule=rule).masks.values())


@pytest.mark.parametrize("rule", ["detail", "literal"])
def test_matches_naive_per_pixel(small_phantom, rule):
    image, _ = small_phantom
    d = decompose(image, 8)
    seg = segment_all(image, 8, rule=rule, decomposition=d)
    for i in range(3, 9):
        expected = naive_mask(image.data, d, i, rule)
        np.testing.assert_array_equal(seg[i].labels, expected)
        np.testing.assert_array_equal(segment_level(image, d, i, rule).labels, expected)


def test_blob_centres_are_foreground():
    params = PhantomParams(size=(128, 128), n_blobs=12)
    image, truth = make_phantom(3, params)
    seg = segment_all(image, 10)
    for i in (6, 7, 8):
        mask = seg[i].labels
        assert mask[truth.labels].mean() > 0.9
        assert mask[~truth.labels].mean() < 0.5


def test_set_shape_and_keys(rng):
    img = ImageGrid(rng.random((32, 32)))
    assert segment_all(img, 3).levels() == [3]
    seg = segment_all(img, 10)
    assert seg.levels() == list(range(3, 11))
    assert len(seg) == 8  # L - 2 masks, R_3..R_10
    assert seg.source_levels == 10
    assert all(m.shape == img.shape for m in seg.masks.values())


def test_set_equals_individual_levels(rng):
    img = ImageGrid(rng.random((24, 24)))
    d = decompose(img, 6)
    seg = segment_all(img, 6, decomposition=d)
    for i in range(3, 7):
        assert seg[i] == segment_level(img, d, i)


def test_deterministic(rng):
    img = ImageGrid(rng.random((24, 24)))
    a, b = segment_all(img, 5), segment_all(img, 5)
    assert all(a[i] == b[i] for i in a.levels())


def test_first_two_details_ignored(rng, small_phantom):
    image, _ = small_phantom
    d = decompose(image, 6)
    noise = tuple(rng.normal(0, 10, image.shape) for _ in range(2))
    tampered = StarletDecomposition(noise + d.details[2:], d.smooth)
    for rule in ("detail", "literal"):
        for i in range(3, 7):
            assert segment_level(image, d, i, rule) == segment_level(image, tampered, i, rule)


def test_level_range_checked(rng):
    img = ImageGrid(rng.random((16, 16)))
    d = decompose(img, 5)
    for bad in (2, 6):
        with pytest.raises(ValueError, match="level"):
            segment_level(img, d, bad)


def test_shape_mismatch(rng):
    d = decompose(rng.random((16, 16)), 4)
    with pytest.raises(ValueError, match="shape"):
        segment_level(ImageGrid(rng.random((16, 15))), d, 3)


def test_too_few_levels():
    with pytest.raises(ValueError, match="at least three levels"):
        segment_all(ImageGrid(np.zeros((8, 8))), 2)


def test_unknown_rule(rng):
    img = ImageGrid(rng.random((8, 8)))
    with pytest.raises(ValueError, match="rule"):
        segment_all(img, 3, rule="otsu")


def test_literal_response_identity(small_phantom):
    # sum_{3..i} w - c0 == -(w1 + w2 + sum_{j>i} w_j + c_L)
    image, _ = small_phantom
    d = decompose(image, 8)
    for i in range(3, 9):
        rest = d.details[0] + d.details[1] + d.smooth
        for j in range(i + 1, 9):
            rest = rest + d.details[j - 1]
        np.testing.assert_allclose(level_response(image, d, i, "literal"), -rest, atol=1e-12)
