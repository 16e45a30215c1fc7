"""Image and mask containers: the currency passed between pipeline stages.

Images are float32 ``(H, W, C)`` arrays with a declared value range, either
the unit storage range ``[0, 1]`` or the symmetric model range ``[-1, 1]``.
Masks are boolean ``(H, W)`` grids and are serialized as single-channel PNG
with values {0, 255}.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import ImageIOError, RangeError, ShapeMismatchError

UNIT_RANGE = (0.0, 1.0)
MODEL_RANGE = (-1.0, 1.0)


@dataclass(eq=False)
class ImageGrid:
    """2-D image with 1 or 3 channels and a declared value range.

    ``pixels`` is normalized to float32 ``(H, W, C)`` on construction; a
    plain ``(H, W)`` array is accepted and treated as single-channel.
    Construction validates the range invariant and raises ``RangeError``
    listing the offending extrema.
    """

    pixels: np.ndarray
    value_range: tuple[float, float] = UNIT_RANGE

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float32)
        if px.ndim == 2:
            px = px[:, :, None]
        if px.ndim != 3 or px.shape[2] not in (1, 3):
            raise ShapeMismatchError(
                f"image must be (H, W) or (H, W, C) with C in {{1, 3}}, got shape {np.shape(self.pixels)}"
            )
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise ShapeMismatchError(f"image must have H >= 1 and W >= 1, got {px.shape[:2]}")
        lo, hi = self.value_range
        mn, mx = float(px.min()), float(px.max())
        if mn < lo or mx > hi:
            raise RangeError(
                f"pixels outside declared range [{lo}, {hi}]: min={mn:.8g}, max={mx:.8g}"
            )
        self.pixels = px

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape[:2]

    def luminance(self) -> np.ndarray:
        """Reduce to a single 2-D channel (0.299, 0.587, 0.114 weights)."""
        if self.channels == 1:
            return self.pixels[:, :, 0]
        w = np.array([0.299, 0.587, 0.114], dtype=np.float32)
        return self.pixels @ w

    def as_rgb(self) -> np.ndarray:
        """Return (H, W, 3) pixels, replicating a single channel if needed."""
        if self.channels == 3:
            return self.pixels
        return np.repeat(self.pixels, 3, axis=2)


@dataclass
class LevelSet:
    """Binary foreground grid; doubles as a segmentation mask."""

    u: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.u)
        if arr.ndim != 2:
            raise ShapeMismatchError(f"level set must be 2-D, got shape {arr.shape}")
        self.u = arr != 0 if arr.dtype != bool else arr

    @property
    def shape(self) -> tuple[int, int]:
        return self.u.shape

    @property
    def area(self) -> int:
        return int(self.u.sum())

    @property
    def is_empty(self) -> bool:
        return not self.u.any()

    def __eq__(self, other):
        return isinstance(other, LevelSet) and self.u.shape == other.u.shape and bool(
            np.array_equal(self.u, other.u)
        )


def merge_masks(masks: list[LevelSet]) -> LevelSet:
    """Pixelwise union of equally shaped masks (commutative, idempotent)."""
    if not masks:
        raise ShapeMismatchError("cannot merge an empty mask list")
    shape = masks[0].shape
    out = np.zeros(shape, dtype=bool)
    for m in masks:
        if m.shape != shape:
            raise ShapeMismatchError(f"mask shapes differ: {m.shape} vs {shape}")
        out |= m.u
    return LevelSet(out)


def load_image_png(path) -> ImageGrid:
    """Decode a PNG into unit-range storage pixels (1 or 3 channels)."""
    try:
        with Image.open(path) as im:
            if im.mode in ("L", "I;16", "I"):
                im = im.convert("L")
                arr = np.asarray(im, dtype=np.float32)[:, :, None]
            else:
                im = im.convert("RGB")
                arr = np.asarray(im, dtype=np.float32)
    except (UnidentifiedImageError, OSError) as exc:
        raise ImageIOError(f"cannot decode image file {path}: {exc}") from exc
    return ImageGrid(arr / 255.0, UNIT_RANGE)


def save_image_png(grid: ImageGrid, path) -> None:
    """Write unit-range pixels as 8-bit PNG (deterministic bytes)."""
    lo, hi = grid.value_range
    if (lo, hi) != UNIT_RANGE:
        raise RangeError(f"only unit-range images are stored as PNG, got range [{lo}, {hi}]")
    arr = np.clip(np.rint(grid.pixels * 255.0), 0, 255).astype(np.uint8)
    if arr.shape[2] == 1:
        Image.fromarray(arr[:, :, 0], mode="L").save(path, format="PNG")
    else:
        Image.fromarray(arr, mode="RGB").save(path, format="PNG")


def load_mask_png(path) -> LevelSet:
    """Decode a single-channel {0, 255} PNG into a boolean mask."""
    try:
        with Image.open(path) as im:
            arr = np.asarray(im.convert("L"))
    except (UnidentifiedImageError, OSError) as exc:
        raise ImageIOError(f"cannot decode mask file {path}: {exc}") from exc
    return LevelSet(arr > 127)


def save_mask_png(mask: LevelSet, path) -> None:
    """Write a boolean mask as a {0, 255} single-channel PNG."""
    arr = np.where(mask.u, 255, 0).astype(np.uint8)
    Image.fromarray(arr, mode="L").save(path, format="PNG")
