import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image as PILImage

from csunfold.errors import ConfigurationError, DimensionError, IngestionError
from csunfold.imaging import (
    extract_patches,
    load_dataset,
    load_image,
    splice_patches,
    to_grayscale,
)


def _write_png(path, arr8):
    PILImage.fromarray(arr8).save(path)


def test_extract_exact_tiling():
    img = np.random.default_rng(0).random((66, 66))
    grid = extract_patches(img, 33)
    assert (grid.rows, grid.cols) == (2, 2)
    assert grid.pad_bottom == 0 and grid.pad_right == 0
    assert grid.patches.shape == (4, 33 * 33)


def test_extract_padding_amounts():
    img = np.zeros((40, 40))
    grid = extract_patches(img, 33)
    assert (grid.rows, grid.cols) == (2, 2)
    # ceil(40/33)*33 - 40 = 26
    assert grid.pad_bottom == 26 and grid.pad_right == 26


def test_constant_single_patch():
    img = np.full((33, 33), 0.25)
    grid = extract_patches(img, 33)
    assert grid.count == 1
    assert np.all(grid.patches[0] == 0.25)


def test_round_trip_bit_exact():
    img = np.random.default_rng(1).random((47, 81))
    grid = extract_patches(img, 33)
    rec = splice_patches(grid)
    assert rec.shape == img.shape
    assert np.array_equal(rec, img)


@settings(deadline=None, max_examples=40)
@given(
    h=st.integers(min_value=1, max_value=50),
    w=st.integers(min_value=1, max_value=50),
    side=st.integers(min_value=2, max_value=12),
    seed=st.integers(min_value=0, max_value=2**31),
)
def test_round_trip_property(h, w, side, seed):
    img = np.random.default_rng(seed).random((h, w))
    grid = extract_patches(img, side)
    assert grid.rows * grid.cols == int(np.ceil(h / side) * np.ceil(w / side))
    assert np.array_equal(splice_patches(grid), img)


def test_block_constant_mosaic():
    grid = extract_patches(np.zeros((4, 4)), 2)
    grid.patches = np.stack([np.full(4, v) for v in (1.0, 2.0, 3.0, 4.0)])
    rec = splice_patches(grid)
    expected = np.block(
        [[np.full((2, 2), 1.0), np.full((2, 2), 2.0)], [np.full((2, 2), 3.0), np.full((2, 2), 4.0)]]
    )
    assert np.array_equal(rec, expected)


def test_vectorization_is_row_major():
    img = np.arange(16.0).reshape(4, 4)
    grid = extract_patches(img, 2)
    # first patch is the top-left 2x2 block in row-major order
    assert np.array_equal(grid.patches[0], np.array([0.0, 1.0, 4.0, 5.0]))
    # patches are ordered row-major over the grid
    assert np.array_equal(grid.patches[1], np.array([2.0, 3.0, 6.0, 7.0]))
    assert np.array_equal(grid.patches[2], np.array([8.0, 9.0, 12.0, 13.0]))


def test_patch_count_mismatch_rejected():
    grid = extract_patches(np.zeros((4, 4)), 2)
    grid.patches = grid.patches[:3]
    with pytest.raises(DimensionError):
        splice_patches(grid)


def test_small_patch_side_rejected():
    with pytest.raises(ConfigurationError):
        extract_patches(np.zeros((4, 4)), 1)


def test_empty_image_rejected():
    with pytest.raises(DimensionError):
        extract_patches(np.zeros((0, 5)), 2)


def test_grayscale_luma_weights():
    rgb = np.zeros((2, 2, 3))
    rgb[..., 0] = 1.0
    assert to_grayscale(rgb) == pytest.approx(np.full((2, 2), 0.299))


def test_load_8bit_and_16bit_normalization(tmp_path):
    arr8 = np.array([[0, 128], [255, 64]], dtype=np.uint8)
    _write_png(tmp_path / "a.png", arr8)
    img = load_image(tmp_path / "a.png")
    assert img.max() == pytest.approx(1.0)
    assert img[0, 0] == 0.0

    arr16 = np.array([[0, 1000], [65535, 500]], dtype=np.uint16)
    PILImage.fromarray(arr16).save(tmp_path / "b.png")
    img16 = load_image(tmp_path / "b.png")
    assert img16.max() == pytest.approx(1.0)


def test_load_dataset_split_counts(tmp_path):
    rng = np.random.default_rng(0)
    for i in range(10):
        _write_png(tmp_path / f"img{i}.png", (rng.random((8, 8)) * 255).astype(np.uint8))
    train, test = load_dataset(tmp_path, (0.8, 0.2), seed=7)
    assert len(train) == 8 and len(test) == 2


def test_load_dataset_deterministic(tmp_path):
    rng = np.random.default_rng(0)
    for i in range(6):
        _write_png(tmp_path / f"img{i}.png", (rng.random((8, 8)) * 255).astype(np.uint8))
    a_train, a_test = load_dataset(tmp_path, (0.5, 0.5), seed=3)
    b_train, b_test = load_dataset(tmp_path, (0.5, 0.5), seed=3)
    for a, b in zip(a_train + a_test, b_train + b_test):
        assert np.array_equal(a, b)


def test_load_dataset_bad_split(tmp_path):
    _write_png(tmp_path / "x.png", np.zeros((4, 4), dtype=np.uint8))
    with pytest.raises(ConfigurationError):
        load_dataset(tmp_path, (0.5, 0.4))


def test_load_dataset_empty_dir(tmp_path):
    with pytest.raises(ConfigurationError):
        load_dataset(tmp_path)


def test_unreadable_file_named_in_error(tmp_path):
    bad = tmp_path / "broken.png"
    bad.write_bytes(b"not a png")
    with pytest.raises(IngestionError, match="broken.png"):
        load_image(bad)
