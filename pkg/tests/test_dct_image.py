"""
DCT画像と正規化のテスト
"""
import numpy as np
import pytest

from src.dct.image import (
    DctImage,
    NormStats,
    blocks_to_dct_image,
    compute_norm_stats,
    dct_image_to_blocks,
    denormalize,
    inverse_zigzag,
    normalize,
    stack_dct_images,
    zigzag_index,
)
from src.errors import EmptyCorpus, OutOfRange, ShapeError, StatsMismatch
from src.jpeg import parse_jpeg


def test_zigzag_is_a_bijection():
    seen = {zigzag_index(k) for k in range(64)}
    assert len(seen) == 64
    for k in range(64):
        assert inverse_zigzag(*zigzag_index(k)) == k


def test_zigzag_known_positions():
    assert zigzag_index(0) == (0, 0)
    assert zigzag_index(1) == (0, 1)
    assert zigzag_index(2) == (1, 0)
    assert zigzag_index(63) == (7, 7)


def test_zigzag_out_of_range():
    with pytest.raises(OutOfRange):
        zigzag_index(64)
    with pytest.raises(OutOfRange):
        inverse_zigzag(8, 0)


def test_blocks_image_identity():
    rng = np.random.default_rng(0)
    plane = rng.integers(-500, 500, size=(24, 40)).astype(np.int32)
    img = blocks_to_dct_image(plane)
    assert img.data.shape == (3, 5, 64)
    np.testing.assert_array_equal(dct_image_to_blocks(img), plane)


def test_channel_is_zigzag_frequency():
    plane = np.zeros((8, 16), dtype=np.int32)
    plane[1, 8] = 7  # 2番目のブロックの (1, 0) はジグザグ位置 2
    img = blocks_to_dct_image(plane)
    assert img.data[0, 1, 2] == 7
    assert img.data.sum() == 7


def test_blocks_reject_bad_shape():
    with pytest.raises(ShapeError):
        blocks_to_dct_image(np.zeros((12, 16)))


def test_dct_image_matches_parsed_blocks(gray_jpeg):
    plane = parse_jpeg(gray_jpeg).coeff_planes[0]
    img = blocks_to_dct_image(plane)
    assert img.data[2, 3, 0] == plane[16, 24]
    assert img.data[2, 3, 1] == plane[16, 25]


def test_normalize_round_trip():
    rng = np.random.default_rng(1)
    data = rng.integers(-100, 100, size=(4, 4, 128))
    stats = NormStats(mean=rng.normal(size=128), std=rng.uniform(0.5, 3.0, size=128))
    np.testing.assert_allclose(denormalize(normalize(data, stats), stats), data, atol=1e-9)


def test_normalize_channel_mismatch():
    with pytest.raises(StatsMismatch):
        normalize(np.zeros((2, 2, 64)), NormStats.identity(128))


def test_norm_stats_floor_and_values():
    a = DctImage(np.full((2, 2, 64), 3, dtype=np.int32))
    b = DctImage(np.full((2, 2, 64), 5, dtype=np.int32))
    stats = compute_norm_stats([a, b])
    np.testing.assert_allclose(stats.mean, 4.0)
    np.testing.assert_allclose(stats.std, 1.0)
    const = compute_norm_stats([a])
    np.testing.assert_allclose(const.std, 1e-3)


def test_norm_stats_order_independent():
    rng = np.random.default_rng(2)
    items = [rng.integers(-50, 50, size=(3, 3, 64)) for _ in range(4)]
    s1 = compute_norm_stats(items)
    s2 = compute_norm_stats(items[::-1])
    np.testing.assert_array_equal(s1.mean, s2.mean)
    np.testing.assert_array_equal(s1.std, s2.std)


def test_empty_corpus():
    with pytest.raises(EmptyCorpus):
        compute_norm_stats([])


def test_stack_requires_same_shape():
    with pytest.raises(ShapeError):
        stack_dct_images([DctImage(np.zeros((2, 2, 64))), DctImage(np.zeros((1, 2, 64)))])
