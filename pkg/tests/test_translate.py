import numpy as np
import pytest
import torch
import torch.nn.functional as F

from echoanat.cyclegan import ModelBundle, preset, translate
from echoanat.cyclegan.translate import translate_with
from echoanat.errors import ModelStateError
from echoanat.grids import ImageGrid


def _smooth_image(h, w, channels=1):
    rows = np.linspace(0, np.pi, h)[:, None]
    cols = np.linspace(0, np.pi, w)[None, :]
    base = 0.5 + 0.35 * np.sin(rows * 2) * np.cos(cols * 3)
    px = np.repeat(base[:, :, None], channels, axis=2).astype(np.float32)
    return ImageGrid(px)


def _roundtrip(image: ImageGrid, net_input: int) -> np.ndarray:
    t = torch.from_numpy(image.as_rgb()).permute(2, 0, 1)[None]
    down = F.interpolate(t, size=(net_input, net_input), mode="bilinear", align_corners=False)
    up = F.interpolate(down, size=image.shape, mode="bilinear", align_corners=False)
    return up[0].permute(1, 2, 0).numpy()


class TestTranslateWith:
    def test_single_patch_output_size(self):
        image = _smooth_image(450, 450)
        out = translate_with(lambda t: t, image, net_input=64, patch_size=450, stride=225)
        assert out.shape == (450, 450)
        assert out.channels == 3

    def test_single_patch_identity_equals_roundtrip(self):
        image = _smooth_image(450, 450)
        out = translate_with(lambda t: t, image, net_input=64, patch_size=450, stride=225)
        expected = _roundtrip(image, 64)
        assert float(np.abs(out.pixels - expected).max()) <= 1e-6

    def test_multi_patch_identity_within_resampling_tolerance(self):
        # 600 wide x 500 tall: 2x2 tiles; a smooth image must survive the
        # tile-resize-stitch pipeline within 2/255
        image = _smooth_image(500, 600)
        out = translate_with(lambda t: t, image, net_input=64, patch_size=450, stride=225)
        assert out.shape == (500, 600)
        expected = _roundtrip(image, 64)
        assert float(np.abs(out.pixels - expected).max()) <= 2.0 / 255.0

    def test_padded_small_image_keeps_size(self):
        image = _smooth_image(333, 217)
        out = translate_with(lambda t: t, image, net_input=64, patch_size=450, stride=225)
        assert out.shape == (333, 217)

    def test_seam_statistic_with_random_generator(self):
        torch.manual_seed(0)
        bundle = ModelBundle.create(preset("desk"), seed=0)
        bundle.g_pa.eval()
        image = _smooth_image(500, 600)
        with torch.no_grad():
            out = translate_with(
                bundle.g_pa, image, net_input=64, patch_size=450, stride=225
            ).pixels[:, :, 0]
        # seams sit where tile edges cross the interior
        row_edges = {50, 450}
        col_edges = {150, 450}
        dr = np.abs(np.diff(out, axis=0))
        dc = np.abs(np.diff(out, axis=1))
        seam_vals = np.concatenate(
            [dr[r - 1, :] for r in row_edges] + [dc[:, c - 1] for c in col_edges]
        )
        intra_rows = np.array([r for r in range(dr.shape[0]) if (r + 1) not in row_edges])
        intra_cols = np.array([c for c in range(dc.shape[1]) if (c + 1) not in col_edges])
        intra_vals = np.concatenate([dr[intra_rows, :].ravel(), dc[:, intra_cols].ravel()])
        assert float(seam_vals.max()) <= float(np.percentile(intra_vals, 99))


class TestTranslateBundle:
    def test_untrained_bundle_rejected(self):
        bundle = ModelBundle.create(preset("tiny"), seed=0)
        image = _smooth_image(16, 16)
        with pytest.raises(ModelStateError):
            translate(bundle, image, patch_size=8, stride=4)
        out = translate(bundle, image, patch_size=8, stride=4, allow_untrained=True)
        assert out.shape == (16, 16)

    def test_output_dimensions_preserved(self):
        bundle = ModelBundle.create(preset("tiny"), seed=0)
        for shape in [(8, 8), (20, 13), (9, 31)]:
            image = _smooth_image(*shape)
            out = translate(bundle, image, patch_size=8, stride=4, allow_untrained=True)
            assert out.shape == shape
