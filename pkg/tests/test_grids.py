import io

import numpy as np
import pytest

from echoanat.errors import ImageIOError, RangeError, ShapeMismatchError
from echoanat.grids import (
    ImageGrid,
    LevelSet,
    load_image_png,
    load_mask_png,
    merge_masks,
    save_image_png,
    save_mask_png,
)


def test_image_grid_normalizes_2d_to_single_channel():
    g = ImageGrid(np.zeros((4, 5)))
    assert g.pixels.shape == (4, 5, 1)
    assert g.channels == 1


def test_image_grid_rejects_bad_channel_count():
    with pytest.raises(ShapeMismatchError):
        ImageGrid(np.zeros((4, 5, 2)))


def test_image_grid_rejects_out_of_range_and_names_extrema():
    arr = np.zeros((3, 3))
    arr[1, 1] = 1.5
    with pytest.raises(RangeError) as err:
        ImageGrid(arr)
    assert "1.5" in str(err.value)


def test_luminance_weights():
    px = np.zeros((1, 1, 3), dtype=np.float32)
    px[0, 0] = (1.0, 0.5, 0.25)
    lum = ImageGrid(px).luminance()
    assert lum[0, 0] == pytest.approx(0.299 + 0.587 * 0.5 + 0.114 * 0.25, abs=1e-6)


def test_level_set_binarizes():
    ls = LevelSet(np.array([[0, 255], [1, 0]]))
    assert ls.u.dtype == bool
    assert ls.area == 2


def test_merge_masks_union_commutative_idempotent():
    a = LevelSet(np.array([[1, 1, 0]]))
    b = LevelSet(np.array([[0, 1, 1]]))
    ab = merge_masks([a, b])
    ba = merge_masks([b, a])
    assert ab == ba
    assert merge_masks([a, a]) == a
    assert ab.area == 3


def test_png_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    grid = ImageGrid(np.round(rng.random((6, 7, 3)) * 255) / 255.0)
    path = tmp_path / "img.png"
    save_image_png(grid, path)
    back = load_image_png(path)
    assert np.allclose(back.pixels, grid.pixels, atol=1e-6)


def test_mask_png_round_trip(tmp_path):
    mask = LevelSet(np.eye(5, dtype=bool))
    path = tmp_path / "m.png"
    save_mask_png(mask, path)
    assert load_mask_png(path) == mask


def test_undecodable_file_raises(tmp_path):
    path = tmp_path / "broken.png"
    path.write_bytes(b"not a png at all")
    with pytest.raises(ImageIOError):
        load_image_png(path)
