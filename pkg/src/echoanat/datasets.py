"""BUSI-layout ingestion, patch tiling and reproducible stratified splits.

Directory layout::

    <root>/{benign,malignant,normal}/<class> (<n>).png
    <root>/{benign,malignant,normal}/<class> (<n>)_mask.png        (optional)
    <root>/{benign,malignant,normal}/<class> (<n>)_mask_1.png ...  (extra tracings)

Splits are drawn at the parent-image level so that every patch of one image
lands in the same subset (no train/test leakage through overlap).
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import LayoutError, ParameterError, RangeError, ShapeMismatchError
from .grids import (
    MODEL_RANGE,
    UNIT_RANGE,
    ImageGrid,
    LevelSet,
    load_image_png,
    load_mask_png,
    merge_masks,
)

CLASS_LABELS = ("benign", "malignant", "normal")
DEFAULT_PATCH_SIZE = 450
DEFAULT_STRIDE = 225
DEFAULT_RATIOS = (0.80, 0.05, 0.15)
SPLIT_NAMES = ("train", "validation", "test")


@dataclass
class Sample:
    """One case: image, zero or more lesion tracings, class label.

    When several tracing files exist, ``masks[0]`` is their pixelwise union
    and the original tracings follow; normal cases carry an empty list.
    """

    id: str
    image: ImageGrid
    masks: list[LevelSet]
    class_label: str

    def __post_init__(self):
        if self.class_label not in CLASS_LABELS:
            raise ParameterError(f"unknown class label {self.class_label!r}")
        for m in self.masks:
            if m.shape != self.image.shape:
                raise ShapeMismatchError(
                    f"mask shape {m.shape} does not match image shape {self.image.shape}"
                )

    @property
    def merged_mask(self) -> LevelSet | None:
        return self.masks[0] if self.masks else None


@dataclass
class Patch:
    image: ImageGrid
    origin: tuple[int, int]
    parent_id: str


@dataclass
class PatchSet:
    """Square tiles covering a (possibly reflect-padded) parent image."""

    patches: list[Patch]
    patch_size: int
    padded_shape: tuple[int, int]


@dataclass
class DatasetSplit:
    train: list[str]
    validation: list[str]
    test: list[str]
    seed: int
    ratios: tuple[float, float, float] = DEFAULT_RATIOS

    def subsets(self) -> dict[str, list[str]]:
        return {"train": self.train, "validation": self.validation, "test": self.test}


def load_sample(image_path, mask_paths, class_label, tracing_index=None) -> Sample:
    """Load one PNG case with its tracing masks.

    Multiple tracings are merged by pixelwise union into ``masks[0]`` with
    the originals retained after it; ``tracing_index`` selects a single
    original tracing instead (ablation switch).
    """
    image = load_image_png(image_path)
    originals = [load_mask_png(p) for p in mask_paths]
    for p, m in zip(mask_paths, originals):
        if m.shape != image.shape:
            raise ShapeMismatchError(
                f"mask {p} has shape {m.shape} but image {image_path} has shape {image.shape}"
            )
    if not originals:
        masks: list[LevelSet] = []
    elif tracing_index is not None:
        if not 0 <= tracing_index < len(originals):
            raise ParameterError(
                f"tracing_index {tracing_index} out of range for {len(originals)} tracings"
            )
        masks = [originals[tracing_index]]
    elif len(originals) == 1:
        masks = originals
    else:
        masks = [merge_masks(originals), *originals]
    sample_id = Path(image_path).stem
    return Sample(id=sample_id, image=image, masks=masks, class_label=class_label)


_MASK_SUFFIX = re.compile(r"_mask(_\d+)?$")


def discover_cases(root) -> list[dict]:
    """Walk a BUSI-layout tree and pair images with their mask files.

    Returns one record per image: ``{id, class_label, image_path,
    mask_paths}`` sorted by id. Mask files without a matching image are
    reported as a layout error listing the offending files.
    """
    root = Path(root)
    if not root.is_dir():
        raise LayoutError(f"dataset root {root} is not a directory")
    records = []
    orphans = []
    for label in CLASS_LABELS:
        class_dir = root / label
        if not class_dir.is_dir():
            continue
        pngs = sorted(class_dir.glob("*.png"))
        images = {p.stem: p for p in pngs if not _MASK_SUFFIX.search(p.stem)}
        masks: dict[str, list[Path]] = {stem: [] for stem in images}
        for p in pngs:
            m = _MASK_SUFFIX.search(p.stem)
            if not m:
                continue
            base = p.stem[: m.start()]
            if base in masks:
                masks[base].append(p)
            else:
                orphans.append(str(p))
        for stem, img_path in sorted(images.items()):
            records.append(
                {
                    "id": stem,
                    "class_label": label,
                    "image_path": img_path,
                    "mask_paths": _sort_mask_paths(masks[stem]),
                }
            )
    if orphans:
        raise LayoutError(
            "mask files without a matching image: " + ", ".join(sorted(orphans))
        )
    if not records:
        raise LayoutError(f"no class directories with images under {root}")
    return records


def _sort_mask_paths(paths: list[Path]) -> list[Path]:
    # "x_mask" first, then "x_mask_1", "x_mask_2", ... in numeric order
    def key(p: Path):
        m = re.search(r"_mask_(\d+)$", p.stem)
        return (0, 0) if m is None else (1, int(m.group(1)))

    return sorted(paths, key=key)


def tile_origins(extent: int, patch_size: int, stride: int) -> list[int]:
    """1-D tile origins: multiples of stride, final origin clamped flush."""
    if patch_size <= 0:
        raise ParameterError(f"patch_size must be positive, got {patch_size}")
    if stride <= 0:
        raise ParameterError(f"stride must be positive, got {stride}")
    if extent < patch_size:
        raise ParameterError(f"extent {extent} smaller than patch size {patch_size}")
    origins = []
    o = 0
    while o + patch_size < extent:
        origins.append(o)
        o += stride
    origins.append(extent - patch_size)
    return origins


def reflect_pad_to(pixels: np.ndarray, min_h: int, min_w: int) -> np.ndarray:
    """Reflect-pad (H, W, C) pixels up to at least (min_h, min_w)."""
    h, w = pixels.shape[:2]
    pad_h = max(0, min_h - h)
    pad_w = max(0, min_w - w)
    if pad_h == 0 and pad_w == 0:
        return pixels
    return np.pad(
        pixels,
        ((0, pad_h), (0, pad_w), (0, 0)),
        mode="reflect" if min(h, w) > 1 else "edge",
    )


def crop_patches(
    image: ImageGrid,
    patch_size: int = DEFAULT_PATCH_SIZE,
    stride: int = DEFAULT_STRIDE,
    parent_id: str = "",
) -> PatchSet:
    """Tile an image into overlapping square patches covering every pixel.

    Images smaller than the patch are reflect-padded up to it first; the
    final origin along each axis is clamped so the last patch sits flush
    with the border.
    """
    if patch_size <= 0 or stride <= 0:
        raise ParameterError(
            f"patch_size and stride must be positive, got {patch_size}, {stride}"
        )
    pixels = reflect_pad_to(image.pixels, patch_size, patch_size)
    h, w = pixels.shape[:2]
    rows = tile_origins(h, patch_size, stride)
    cols = tile_origins(w, patch_size, stride)
    patches = [
        Patch(
            image=ImageGrid(
                pixels[r : r + patch_size, c : c + patch_size], image.value_range
            ),
            origin=(r, c),
            parent_id=parent_id,
        )
        for r in rows
        for c in cols
    ]
    return PatchSet(patches=patches, patch_size=patch_size, padded_shape=(h, w))


def apportion(n: int, ratios) -> list[int]:
    """Split n items into integer counts by largest remainder.

    Ties go to the larger ratio, then to the later entry, so the test
    share wins over validation for the (train, validation, test) layout.
    """
    if n < 0:
        raise ParameterError("n must be non-negative")
    exact = [r * n for r in ratios]
    base = [math.floor(e) for e in exact]
    leftover = n - sum(base)
    order = sorted(
        range(len(ratios)),
        key=lambda i: (exact[i] - base[i], ratios[i], i),
        reverse=True,
    )
    for i in order[:leftover]:
        base[i] += 1
    return base


def stratified_split(samples, ratios=DEFAULT_RATIOS, seed: int = 0) -> DatasetSplit:
    """Deterministic per-class split of samples (or (id, label) pairs).

    Per-class counts come from largest-remainder apportionment of the
    (train, validation, test) ratios, so each subset's class share stays
    within one sample of the global share. All patches of an image follow
    its parent id.
    """
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ParameterError(f"ratios must sum to 1, got {ratios} (sum {sum(ratios)})")
    if len(ratios) != 3:
        raise ParameterError("expected (train, validation, test) ratios")
    pairs = [
        (s.id, s.class_label) if isinstance(s, Sample) else (s[0], s[1]) for s in samples
    ]
    ids = [p[0] for p in pairs]
    if len(set(ids)) != len(ids):
        raise ParameterError("duplicate sample ids in split input")
    by_class: dict[str, list[str]] = {}
    for sample_id, label in pairs:
        by_class.setdefault(label, []).append(sample_id)
    for label, members in by_class.items():
        if len(members) < 3:
            raise ParameterError(
                f"class {label!r} has {len(members)} samples; need at least 3"
            )
    rng = np.random.default_rng(seed)
    subsets: dict[str, list[str]] = {name: [] for name in SPLIT_NAMES}
    for label in sorted(by_class):
        members = sorted(by_class[label])
        rng.shuffle(members)
        n_train, n_val, n_test = apportion(len(members), ratios)
        subsets["train"].extend(members[:n_train])
        subsets["validation"].extend(members[n_train : n_train + n_val])
        subsets["test"].extend(members[n_train + n_val :])
    return DatasetSplit(
        train=sorted(subsets["train"]),
        validation=sorted(subsets["validation"]),
        test=sorted(subsets["test"]),
        seed=seed,
        ratios=tuple(ratios),
    )


def write_manifest(split: DatasetSplit, path) -> None:
    """Write the split as ``id<TAB>subset`` lines sorted by id."""
    lines = []
    for name, members in split.subsets().items():
        lines.extend(f"{sample_id}\t{name}" for sample_id in members)
    Path(path).write_text("\n".join(sorted(lines)) + "\n", encoding="utf-8")


def read_manifest(path) -> dict[str, str]:
    """Read a manifest back as {id: subset}."""
    assignment = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        sample_id, _, subset = line.partition("\t")
        if subset not in SPLIT_NAMES:
            raise LayoutError(f"manifest line has unknown subset: {line!r}")
        assignment[sample_id] = subset
    return assignment


def to_model_range(image: ImageGrid) -> ImageGrid:
    """Affine map v -> 2v - 1 from unit storage range to model range."""
    if tuple(image.value_range) != UNIT_RANGE:
        raise RangeError(f"expected unit-range image, got range {image.value_range}")
    out = (image.pixels.astype(np.float64) * 2.0 - 1.0).astype(np.float32)
    return ImageGrid(out, MODEL_RANGE)


def from_model_range(image: ImageGrid) -> ImageGrid:
    """Inverse affine map v -> (v + 1) / 2 back to unit storage range."""
    if tuple(image.value_range) != MODEL_RANGE:
        raise RangeError(f"expected model-range image, got range {image.value_range}")
    out = ((image.pixels.astype(np.float64) + 1.0) / 2.0).astype(np.float32)
    return ImageGrid(out, UNIT_RANGE)
