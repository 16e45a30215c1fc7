import time

import numpy as np
import pytest
from scipy import ndimage

from echoanat.errors import ParameterError, SeedingError, ShapeMismatchError
from echoanat.grids import LevelSet
from echoanat.metrics import dice
from echoanat.segmentation import (
    CircleSeed,
    EdgeMap,
    GACParams,
    MaskSeed,
    init_level_set,
    inverse_gaussian_gradient,
    morphgac_run,
    morphgac_step,
    replicated_gradient,
    seed_from_mask,
    sup_inf,
    inf_sup,
)


def _disk_image(n=256, center=(128, 128), radius=60, inside=0.2, outside=0.8, blur=1.0):
    rows, cols = np.mgrid[0:n, 0:n]
    disk = (rows - center[0]) ** 2 + (cols - center[1]) ** 2 <= radius**2
    img = np.full((n, n), outside)
    img[disk] = inside
    return ndimage.gaussian_filter(img, blur, mode="nearest"), disk


def _uniform_edge(shape):
    g = EdgeMap(np.ones(shape))
    return g, replicated_gradient(g.g)


class TestInitLevelSet:
    def test_half_pixel_radius_single_seed(self):
        ls = init_level_set(CircleSeed((16.0, 16.0), 0.5), (33, 33))
        assert ls.area == 1
        assert ls.u[16, 16]

    def test_disk_area_close_to_analytic(self):
        ls = init_level_set(CircleSeed((32.0, 32.0), 10.0), (64, 64))
        assert abs(ls.area - np.pi * 100) / (np.pi * 100) < 0.05

    def test_mask_seed_pass_through(self):
        mask = LevelSet(np.eye(9, dtype=bool))
        ls = init_level_set(MaskSeed(mask), (9, 9))
        assert ls == mask

    def test_out_of_bounds_circle_rejected(self):
        with pytest.raises(ParameterError):
            init_level_set(CircleSeed((2.0, 2.0), 5.0), (32, 32))


class TestMorphgacStep:
    def test_empty_set_is_fixed_point(self):
        u = LevelSet(np.zeros((16, 16), dtype=bool))
        g, grad = _uniform_edge((16, 16))
        out = morphgac_step(u, g, grad, GACParams(balloon=1.0, smoothing=0))
        assert out.is_empty

    def test_balloon_dilates_square_with_full_3x3_element(self):
        # 3x3 square seed on uniform g: one step grows it to the 5x5
        # dilation footprint of the full 3x3 structuring element
        u = np.zeros((11, 11), dtype=bool)
        u[4:7, 4:7] = True
        g, grad = _uniform_edge((11, 11))
        out = morphgac_step(LevelSet(u), g, grad, GACParams(balloon=1.0, threshold=0.3, smoothing=0))
        expected = ndimage.binary_dilation(u, np.ones((3, 3), dtype=bool))
        assert np.array_equal(out.u, expected)
        assert out.area == 25

    def test_attachment_noop_on_uniform_g_without_balloon(self):
        rng = np.random.default_rng(0)
        u = rng.random((12, 12)) > 0.5
        g, grad = _uniform_edge((12, 12))
        out = morphgac_step(LevelSet(u), g, grad, GACParams(balloon=0.0, smoothing=0))
        assert np.array_equal(out.u, u)

    def test_checkerboard_smoothing_reduces_boundary(self):
        u = np.indices((8, 8)).sum(axis=0) % 2 == 0
        smoothed = sup_inf(inf_sup(u))

        def boundary_count(m):
            inner = ndimage.binary_erosion(m, np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]]))
            return int((m & ~inner).sum())

        assert boundary_count(smoothed) < boundary_count(u)

    def test_erosion_balloon_shrinks(self):
        u = np.zeros((11, 11), dtype=bool)
        u[3:8, 3:8] = True
        g, grad = _uniform_edge((11, 11))
        out = morphgac_step(LevelSet(u), g, grad, GACParams(balloon=-1.0, smoothing=0))
        assert out.area < int(u.sum())

    def test_shape_mismatch_rejected(self):
        u = LevelSet(np.zeros((8, 8), dtype=bool))
        g, grad = _uniform_edge((9, 9))
        with pytest.raises(ShapeMismatchError):
            morphgac_step(u, g, grad, GACParams())

    def test_balloon_monotonicity(self):
        # attachment disabled via uniform g, smoothing 0
        rng = np.random.default_rng(3)
        u = ndimage.binary_dilation(rng.random((20, 20)) > 0.93)
        g, grad = _uniform_edge((20, 20))
        grow = LevelSet(u)
        shrink = LevelSet(u)
        for _ in range(5):
            nxt = morphgac_step(grow, g, grad, GACParams(balloon=1.0, smoothing=0))
            assert nxt.area >= grow.area
            grow = nxt
            nxt = morphgac_step(shrink, g, grad, GACParams(balloon=-1.0, smoothing=0))
            assert nxt.area <= shrink.area
            shrink = nxt


class TestMorphgacRun:
    def test_disk_phantom_oracle(self):
        img, disk = _disk_image()
        t0 = time.time()
        result = morphgac_run(img, CircleSeed((128, 128), 20), GACParams(iterations=200))
        elapsed = time.time() - t0
        assert dice(result.mask.u, disk) >= 0.95
        assert elapsed < 10.0

    def test_seed_outside_edges_shrinks_to_empty(self):
        img = np.full((64, 64), 0.5)
        result = morphgac_run(img, CircleSeed((32, 32), 10), GACParams(balloon=-1.0))
        assert result.mask.is_empty

    def test_trace_length_bounded(self):
        img, _ = _disk_image(n=96, center=(48, 48), radius=30)
        params = GACParams(iterations=200, early_stop_window=1000)
        result = morphgac_run(img, CircleSeed((48, 48), 10), params, trace_every=10)
        assert result.iterations == 200
        assert len(result.trace) <= 21
        assert result.trace[-1] == result.mask

    def test_deterministic(self):
        img, _ = _disk_image(n=128, center=(64, 64), radius=40)
        a = morphgac_run(img, CircleSeed((64, 64), 12), GACParams())
        b = morphgac_run(img, CircleSeed((64, 64), 12), GACParams())
        assert a.mask == b.mask
        assert a.iterations == b.iterations

    def test_early_stop_before_max_iterations(self):
        img, _ = _disk_image(n=96, center=(48, 48), radius=25)
        result = morphgac_run(img, CircleSeed((48, 48), 10), GACParams(iterations=500))
        assert result.iterations < 500

    def test_accepts_prebuilt_edge_map(self):
        img, disk = _disk_image(n=128, center=(64, 64), radius=40)
        edge = inverse_gaussian_gradient(img, 100, 1.5)
        via_edge = morphgac_run(edge, CircleSeed((64, 64), 12), GACParams())
        via_image = morphgac_run(img, CircleSeed((64, 64), 12), GACParams())
        assert via_edge.mask == via_image.mask

    def test_binary_after_every_iteration(self):
        img, _ = _disk_image(n=64, center=(32, 32), radius=18)
        result = morphgac_run(
            img, CircleSeed((32, 32), 6), GACParams(iterations=40, early_stop_window=100),
            trace_every=1,
        )
        for frame in result.trace:
            assert frame.u.dtype == bool
            assert set(np.unique(frame.u)) <= {False, True}

    def test_agreement_with_reference_implementation(self):
        # independent oracle: scikit-image's MorphGAC with identical
        # parameters on the same edge map
        from skimage.segmentation import morphological_geodesic_active_contour as sk_gac

        rng = np.random.default_rng(11)
        scores = []
        for _ in range(20):
            n = 128
            cy, cx = rng.uniform(45, 80, 2)
            a, b = rng.uniform(14, 26, 2)
            rows, cols = np.mgrid[0:n, 0:n]
            inside = ((rows - cy) / a) ** 2 + ((cols - cx) / b) ** 2 <= 1
            img = np.full((n, n), 0.75)
            img[inside] = 0.25
            img = ndimage.gaussian_filter(img, 1.0, mode="nearest")
            img = np.clip(img + rng.normal(0, 0.01, img.shape), 0, 1)
            edge = inverse_gaussian_gradient(img, 100, 1.5)
            seed = CircleSeed((cy, cx), 8)
            mine = morphgac_run(edge, seed, GACParams(iterations=200, early_stop_window=1000))
            init = init_level_set(seed, (n, n)).u.astype(np.int8)
            ref = sk_gac(edge.g, 200, init_level_set=init, smoothing=1, threshold=0.3, balloon=1)
            scores.append(dice(mine.mask.u, ref > 0))
        assert min(scores) >= 0.99


class TestSeedFromMask:
    def test_centered_disk(self):
        mask = init_level_set(CircleSeed((40.0, 40.0), 20.0), (80, 80))
        seed = seed_from_mask(mask)
        assert seed.center == pytest.approx((40.0, 40.0), abs=0.5)
        # distance-transform inscribed radius of a disk equals its radius
        inscribed = float(ndimage.distance_transform_edt(mask.u).max())
        assert seed.radius == pytest.approx(inscribed / 2, abs=0.6)
        assert seed.radius == pytest.approx(10.0, abs=1.0)

    def test_single_pixel_clamps_radius(self):
        u = np.zeros((32, 32), dtype=bool)
        u[10, 12] = True
        seed = seed_from_mask(LevelSet(u))
        assert seed.radius == 2.0
        assert seed.center == (10.0, 12.0)

    def test_crescent_recenters_to_foreground(self):
        outer = init_level_set(CircleSeed((30.0, 30.0), 20.0), (64, 64)).u
        inner = init_level_set(CircleSeed((30.0, 38.0), 15.0), (64, 64)).u
        crescent = LevelSet(outer & ~inner)
        rows, cols = np.nonzero(crescent.u)
        cy, cx = rows.mean(), cols.mean()
        assert not crescent.u[int(round(cy)), int(round(cx))]  # centroid off-mask
        seed = seed_from_mask(crescent)
        iy, ix = int(round(seed.center[0])), int(round(seed.center[1]))
        # recentered onto the nearest foreground pixel
        d2 = (rows - cy) ** 2 + (cols - cx) ** 2
        j = int(d2.argmin())
        assert (iy, ix) == (rows[j], cols[j])

    def test_empty_mask_raises(self):
        with pytest.raises(SeedingError):
            seed_from_mask(LevelSet(np.zeros((8, 8), dtype=bool)))
