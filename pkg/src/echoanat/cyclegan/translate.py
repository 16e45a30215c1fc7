"""Full-image translation: tile, run the generator per patch, feather-stitch.

Patches follow the training tiling geometry, are resized to the network
resolution, translated, resized back and blended with a separable linear
tent weight so overlap zones cross-fade without visible seams.
"""
from __future__ import annotations

import numpy as np
import torch
import torch.nn.functional as F

from ..datasets import DEFAULT_PATCH_SIZE, DEFAULT_STRIDE, crop_patches, from_model_range, to_model_range
from ..errors import ModelStateError, ParameterError
from ..grids import MODEL_RANGE, ImageGrid
from .networks import ModelBundle


def _tent(length: int) -> np.ndarray:
    # linear ramp peaking mid-patch, strictly positive at the borders
    idx = np.arange(length, dtype=np.float64)
    return np.minimum(idx + 1.0, length - idx)


def translate_with(
    patch_fn,
    image: ImageGrid,
    net_input: int,
    patch_size: int = DEFAULT_PATCH_SIZE,
    stride: int = DEFAULT_STRIDE,
) -> ImageGrid:
    """Run an arbitrary (N, C, h, w) -> (N, C, h, w) mapping over tiles.

    The mapping operates at ``net_input`` resolution; output pixels land in
    the unit storage range with 3 channels and the input's spatial size.
    """
    if net_input < 1:
        raise ParameterError(f"net_input must be >= 1, got {net_input}")
    h, w = image.shape
    model_img = to_model_range(ImageGrid(image.as_rgb(), image.value_range))
    patch_set = crop_patches(model_img, patch_size=patch_size, stride=stride)
    ph, pw = patch_set.padded_shape
    acc = np.zeros((ph, pw, 3), dtype=np.float64)
    weight = np.zeros((ph, pw, 1), dtype=np.float64)
    tent = _tent(patch_size)
    tent2d = (tent[:, None] * tent[None, :])[:, :, None]
    with torch.no_grad():
        for patch in patch_set.patches:
            t = torch.from_numpy(patch.image.pixels).permute(2, 0, 1)[None].float()
            if patch_size != net_input:
                t = F.interpolate(
                    t, size=(net_input, net_input), mode="bilinear", align_corners=False
                )
            out = patch_fn(t)
            if tuple(out.shape) != tuple(t.shape):
                raise ParameterError(
                    f"patch mapping changed shape: {tuple(t.shape)} -> {tuple(out.shape)}"
                )
            if patch_size != net_input:
                out = F.interpolate(
                    out, size=(patch_size, patch_size), mode="bilinear", align_corners=False
                )
            block = out[0].permute(1, 2, 0).numpy().astype(np.float64)
            r, c = patch.origin
            acc[r : r + patch_size, c : c + patch_size] += block * tent2d
            weight[r : r + patch_size, c : c + patch_size] += tent2d
    stitched = acc / weight
    stitched = np.clip(stitched[:h, :w], MODEL_RANGE[0], MODEL_RANGE[1])
    return from_model_range(ImageGrid(stitched.astype(np.float32), MODEL_RANGE))


def translate(
    bundle: ModelBundle,
    image: ImageGrid,
    patch_size: int = DEFAULT_PATCH_SIZE,
    stride: int = DEFAULT_STRIDE,
    allow_untrained: bool = False,
) -> ImageGrid:
    """Translate a full US image into the pseudo-anatomy domain."""
    if bundle.steps_trained == 0 and not allow_untrained:
        raise ModelStateError(
            "bundle has no training steps; load a checkpoint or pass allow_untrained"
        )
    bundle.g_pa.eval()
    return translate_with(
        bundle.g_pa,
        image,
        net_input=bundle.arch.net_input,
        patch_size=patch_size,
        stride=stride,
    )
