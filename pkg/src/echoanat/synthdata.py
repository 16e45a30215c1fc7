"""Procedural two-domain phantoms: speckled US-style scans vs smooth,
opposite-contrast anatomy-style images, with exact lesion masks.

Geometry is drawn once per case from the spec seed, so the same spec
rendered in both styles yields identical masks. Textures come from
independent child streams of the same seed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import ndimage

from .datasets import Sample
from .errors import ParameterError, PhantomSpecError
from .grids import ImageGrid, LevelSet, save_image_png, save_mask_png

LESION_CLASSES = ("benign", "malignant", "normal")

US_BACKGROUND = 0.50
US_LESION = 0.18
ANATOMY_BACKGROUND = 0.45
ANATOMY_LESION = 0.82
ANATOMY_TINT = (1.00, 0.74, 0.70)
SHADOW_FACTOR = 0.55
EDGE_BLUR_SIGMA = 1.0
LESION_MARGIN = 2


@dataclass(frozen=True)
class Ellipse:
    center: tuple[float, float]  # (row, col)
    semi_axes: tuple[float, float]  # (along row axis, along col axis) before rotation
    rotation: float = 0.0  # radians


@dataclass(frozen=True)
class PhantomSpec:
    image_size: int
    lesion: Ellipse | None
    lesion_class: str
    shadow: bool = False
    attenuation_coefficient: float = 0.0
    speckle_strength: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.image_size < 1:
            raise PhantomSpecError(f"image_size must be >= 1, got {self.image_size}")
        if self.lesion_class not in LESION_CLASSES:
            raise PhantomSpecError(f"unknown lesion class {self.lesion_class!r}")
        if (self.lesion is None) != (self.lesion_class == "normal"):
            raise PhantomSpecError("normal phantoms have no lesion; others require one")
        if self.attenuation_coefficient < 0:
            raise PhantomSpecError("attenuation_coefficient must be >= 0")
        if self.speckle_strength < 0:
            raise PhantomSpecError("speckle_strength must be >= 0")
        if self.lesion is not None:
            _check_lesion_bounds(self)


# Maximum total radial perturbation applied to malignant boundaries; bounds
# both the margin check and the star-shaped (connected) guarantee.
MALIGNANT_MAX_PERTURBATION = 0.36


def _boundary_harmonics(spec: PhantomSpec):
    """Radial boundary perturbation (amps, frequencies, phases) for malignant lesions."""
    if spec.lesion_class != "malignant":
        return np.zeros(0), np.zeros(0, dtype=int), np.zeros(0)
    rng = np.random.default_rng(np.random.SeedSequence(spec.seed).spawn(3)[0])
    amps = rng.uniform(0.05, 0.12, size=3)
    amps *= min(1.0, MALIGNANT_MAX_PERTURBATION / amps.sum())
    freqs = rng.integers(3, 9, size=3)
    phases = rng.uniform(0.0, 2.0 * math.pi, size=3)
    return amps, freqs, phases


def _check_lesion_bounds(spec: PhantomSpec) -> None:
    lesion = spec.lesion
    reach = max(lesion.semi_axes)
    if spec.lesion_class == "malignant":
        reach *= 1.0 + MALIGNANT_MAX_PERTURBATION
    lo = min(lesion.center) - reach
    hi = max(lesion.center) + reach
    if lo < LESION_MARGIN or hi > spec.image_size - 1 - LESION_MARGIN:
        raise PhantomSpecError(
            f"lesion (center {lesion.center}, reach {reach:.1f}) leaves less than "
            f"{LESION_MARGIN}px margin in a {spec.image_size}px image"
        )


def rasterize_lesion(spec: PhantomSpec) -> LevelSet:
    """Exact boolean mask of the spec's lesion (empty grid for normal)."""
    n = spec.image_size
    if spec.lesion is None:
        return LevelSet(np.zeros((n, n), dtype=bool))
    lesion = spec.lesion
    rows, cols = np.mgrid[0:n, 0:n].astype(np.float64)
    dy = rows - lesion.center[0]
    dx = cols - lesion.center[1]
    cos_t, sin_t = math.cos(lesion.rotation), math.sin(lesion.rotation)
    yr = (cos_t * dy + sin_t * dx) / lesion.semi_axes[0]
    xr = (-sin_t * dy + cos_t * dx) / lesion.semi_axes[1]
    rho = np.hypot(yr, xr)
    boundary = np.ones_like(rho)
    amps, freqs, phases = _boundary_harmonics(spec)
    if len(amps):
        theta = np.arctan2(xr, yr)
        for a, k, p in zip(amps, freqs, phases):
            boundary += a * np.sin(k * theta + p)
    return LevelSet(rho <= boundary)


def _texture_rng(spec: PhantomSpec, style: str) -> np.random.Generator:
    children = np.random.SeedSequence(spec.seed).spawn(3)
    return np.random.default_rng(children[1] if style == "us" else children[2])


def _apply_attenuation(img: np.ndarray, coefficient: float) -> np.ndarray:
    if coefficient == 0.0:
        return img
    n = img.shape[0]
    depth = np.arange(n, dtype=np.float64) / max(n - 1, 1)
    return img * np.exp(-coefficient * depth)[:, None]


def render_us_style(spec: PhantomSpec) -> tuple[ImageGrid, LevelSet]:
    """Speckled, depth-attenuated grayscale phantom with a dark lesion."""
    n = spec.image_size
    mask = rasterize_lesion(spec)
    base = np.full((n, n), US_BACKGROUND, dtype=np.float64)
    base[mask.u] = US_LESION
    base = ndimage.gaussian_filter(base, EDGE_BLUR_SIGMA, mode="nearest")
    if spec.speckle_strength > 0:
        rng = _texture_rng(spec, "us")
        rayleigh = rng.rayleigh(scale=1.0, size=(n, n)) * math.sqrt(2.0 / math.pi)
        base *= 1.0 + spec.speckle_strength * (rayleigh - 1.0)
    base = _apply_attenuation(base, spec.attenuation_coefficient)
    if spec.shadow and not mask.is_empty:
        rows_any = np.flatnonzero(mask.u.any(axis=1))
        cols_any = np.flatnonzero(mask.u.any(axis=0))
        base[rows_any[-1] + 1 :, cols_any[0] : cols_any[-1] + 1] *= SHADOW_FACTOR
    return ImageGrid(np.clip(base, 0.0, 1.0)), mask


def render_anatomy_style(spec: PhantomSpec) -> tuple[ImageGrid, LevelSet]:
    """Smooth, low-noise tri-channel phantom with a light lesion."""
    n = spec.image_size
    mask = rasterize_lesion(spec)
    base = np.full((n, n), ANATOMY_BACKGROUND, dtype=np.float64)
    base[mask.u] = ANATOMY_LESION
    base = ndimage.gaussian_filter(base, EDGE_BLUR_SIGMA, mode="nearest")
    rng = _texture_rng(spec, "anatomy")
    field = ndimage.gaussian_filter(rng.standard_normal((n, n)), max(n / 16.0, 2.0))
    scale = field.std()
    if scale > 0:
        base += 0.02 * field / scale
    base = _apply_attenuation(base, spec.attenuation_coefficient)
    channels = np.stack([base * t for t in ANATOMY_TINT], axis=-1)
    return ImageGrid(np.clip(channels, 0.0, 1.0)), mask


@dataclass(frozen=True)
class GeneratorRanges:
    """Sampling ranges for procedural cases; sizes scale with the image."""

    semi_axis_frac: tuple[float, float] = (0.11, 0.22)
    attenuation: tuple[float, float] = (0.0, 0.35)
    speckle: tuple[float, float] = (0.10, 0.22)
    anatomy_attenuation: tuple[float, float] = (0.0, 0.15)
    shadow_prob: float = 0.3


@dataclass
class SamplePair:
    us: Sample
    anatomy: Sample
    us_spec: PhantomSpec
    anatomy_spec: PhantomSpec


def _draw_spec(
    label: str, size: int, ranges: GeneratorRanges, rng: np.random.Generator, seed: int, style: str
) -> PhantomSpec:
    attenuation_range = (
        ranges.anatomy_attenuation if style == "anatomy" else ranges.attenuation
    )
    attenuation = rng.uniform(*attenuation_range)
    speckle = rng.uniform(*ranges.speckle) if style == "us" else 0.0
    shadow = style == "us" and label != "normal" and rng.random() < ranges.shadow_prob
    if label == "normal":
        return PhantomSpec(
            image_size=size,
            lesion=None,
            lesion_class="normal",
            shadow=False,
            attenuation_coefficient=attenuation,
            speckle_strength=speckle,
            seed=seed,
        )
    axes = rng.uniform(ranges.semi_axis_frac[0], ranges.semi_axis_frac[1], size=2) * size
    reach = axes.max() * (
        1.0 + MALIGNANT_MAX_PERTURBATION if label == "malignant" else 1.0
    )
    bound = reach + LESION_MARGIN + 1
    if bound >= size - 1 - bound:
        raise ParameterError(
            f"image size {size} too small for semi-axis range {ranges.semi_axis_frac}"
        )
    center = rng.uniform(bound, size - 1 - bound, size=2)
    rotation = rng.uniform(0.0, math.pi)
    return PhantomSpec(
        image_size=size,
        lesion=Ellipse(tuple(center), tuple(axes), rotation),
        lesion_class=label,
        shadow=shadow,
        attenuation_coefficient=attenuation,
        speckle_strength=speckle,
        seed=seed,
    )


def _to_sample(sample_id: str, label: str, rendered) -> Sample:
    image, mask = rendered
    masks = [] if mask.is_empty else [mask]
    return Sample(id=sample_id, image=image, masks=masks, class_label=label)


def generate_dataset(
    n_per_class: int,
    size: int,
    seed: int = 0,
    paired: bool = False,
    ranges: GeneratorRanges = GeneratorRanges(),
) -> list[SamplePair]:
    """Draw n cases per class in both domains, deterministically under seed.

    Domains use independent spec draws (unpaired) unless ``paired`` is set,
    in which case both styles share one geometry (mask equality oracle).
    """
    if n_per_class < 1:
        raise ParameterError("n_per_class must be >= 1")
    root = np.random.SeedSequence(seed)
    ss_us, ss_an = root.spawn(2)
    rng_us = np.random.default_rng(ss_us)
    rng_an = np.random.default_rng(ss_an)
    pairs = []
    for label in LESION_CLASSES:
        for i in range(1, n_per_class + 1):
            sample_id = f"{label} ({i})"
            us_seed = int(rng_us.integers(0, 2**31 - 1))
            us_spec = _draw_spec(label, size, ranges, rng_us, us_seed, "us")
            an_seed = int(rng_an.integers(0, 2**31 - 1))
            an_spec = _draw_spec(label, size, ranges, rng_an, an_seed, "anatomy")
            if paired:
                an_spec = replace(us_spec, speckle_strength=0.0, shadow=False)
            pairs.append(
                SamplePair(
                    us=_to_sample(sample_id, label, render_us_style(us_spec)),
                    anatomy=_to_sample(sample_id, label, render_anatomy_style(an_spec)),
                    us_spec=us_spec,
                    anatomy_spec=an_spec,
                )
            )
    return pairs


def write_dataset(pairs: list[SamplePair], root) -> list[Path]:
    """Write both domains in BUSI layout under <root>/us and <root>/anatomy."""
    root = Path(root)
    written = []
    for domain in ("us", "anatomy"):
        for pair in pairs:
            sample = pair.us if domain == "us" else pair.anatomy
            class_dir = root / domain / sample.class_label
            class_dir.mkdir(parents=True, exist_ok=True)
            img_path = class_dir / f"{sample.id}.png"
            save_image_png(sample.image, img_path)
            written.append(img_path)
            if sample.masks:
                mask_path = class_dir / f"{sample.id}_mask.png"
                save_mask_png(sample.masks[0], mask_path)
                written.append(mask_path)
    return written
