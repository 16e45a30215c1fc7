import numpy as np
import pytest

from echoanat.errors import ParameterError
from echoanat.grids import ImageGrid
from echoanat.segmentation import inverse_gaussian_gradient


# --- brute-force separable derivative-of-Gaussian oracle -------------------
def _kernel1d(sigma, order, radius):
    x = np.arange(-radius, radius + 1)
    phi = np.exp(-0.5 / sigma**2 * x**2)
    phi /= phi.sum()
    if order == 0:
        return phi
    return -x / sigma**2 * phi


def _conv1d_replicate(arr, kernel, axis):
    # out[i] = sum_t kernel[t + r] * arr[i - t]; borders replicated
    r = (len(kernel) - 1) // 2
    arr = np.moveaxis(np.asarray(arr, dtype=np.float64), axis, 0)
    out = np.zeros_like(arr)
    n = arr.shape[0]
    for t in range(-r, r + 1):
        idx = np.clip(np.arange(n) - t, 0, n - 1)
        out += kernel[t + r] * arr[idx]
    return np.moveaxis(out, 0, axis)


def igg_oracle(image, alpha, sigma):
    radius = int(4.0 * sigma + 0.5)
    smooth = _kernel1d(sigma, 0, radius)
    deriv = _kernel1d(sigma, 1, radius)
    dy = _conv1d_replicate(_conv1d_replicate(image, smooth, 1), deriv, 0)
    dx = _conv1d_replicate(_conv1d_replicate(image, smooth, 0), deriv, 1)
    return 1.0 / np.sqrt(1.0 + alpha * np.hypot(dy, dx))


class TestInverseGaussianGradient:
    def test_constant_image_gives_ones(self):
        g = inverse_gaussian_gradient(np.full((32, 32), 0.4), 100, 1.5).g
        assert np.allclose(g, 1.0)

    def test_range_is_zero_one(self):
        rng = np.random.default_rng(0)
        g = inverse_gaussian_gradient(rng.random((40, 40)), 100, 1.5).g
        assert float(g.min()) > 0.0
        assert float(g.max()) <= 1.0

    def test_doubling_alpha_decreases_g_pointwise(self):
        rng = np.random.default_rng(1)
        img = rng.random((24, 24))
        g1 = inverse_gaussian_gradient(img, 100, 1.5).g
        g2 = inverse_gaussian_gradient(img, 200, 1.5).g
        nonflat = ~np.isclose(g1, 1.0)
        assert nonflat.any()
        assert (g2[nonflat] < g1[nonflat]).all()
        assert np.allclose(g2[~nonflat], g1[~nonflat])

    def test_step_edge_matches_convolution_oracle(self):
        img = np.zeros((40, 60))
        img[:, 30:] = 1.0  # vertical step edge 0 -> 1
        mine = inverse_gaussian_gradient(img, 100, 1.5).g
        ref = igg_oracle(img, 100, 1.5)
        assert float(np.abs(mine - ref).max()) < 1e-6
        # the minimum sits on the edge columns
        assert float(mine.min()) == pytest.approx(float(ref[:, 29:31].min()), abs=1e-9)

    def test_random_image_matches_oracle(self):
        rng = np.random.default_rng(7)
        img = rng.random((31, 27))
        mine = inverse_gaussian_gradient(img, 100, 1.5).g
        assert float(np.abs(mine - igg_oracle(img, 100, 1.5)).max()) < 1e-6

    def test_tri_channel_reduced_to_luminance(self):
        rng = np.random.default_rng(2)
        px = rng.random((16, 16, 3)).astype(np.float32)
        grid = ImageGrid(px)
        g_color = inverse_gaussian_gradient(grid, 100, 1.5).g
        g_gray = inverse_gaussian_gradient(grid.luminance(), 100, 1.5).g
        assert np.allclose(g_color, g_gray)

    def test_invalid_parameters(self):
        img = np.zeros((8, 8))
        with pytest.raises(ParameterError):
            inverse_gaussian_gradient(img, 0, 1.5)
        with pytest.raises(ParameterError):
            inverse_gaussian_gradient(img, 100, -1)
