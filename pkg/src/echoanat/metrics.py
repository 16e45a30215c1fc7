"""Per-lesion mask agreement metrics and grouped summary statistics.

Three normalized indices compare a generated mask against a reference:
Dice overlap, centroid displacement as a percentage of the image diagonal,
and absolute area difference as a percentage of the image area. Records
aggregate into a medians / mean-std table per tumor class and reference
kind (manual tracings vs automatic re-segmentations).
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import ParameterError, ShapeMismatchError
from .grids import LevelSet

REFERENCE_KINDS = ("manual", "reseg")


def _as_bool(mask) -> np.ndarray:
    arr = mask.u if isinstance(mask, LevelSet) else np.asarray(mask)
    if arr.ndim != 2:
        raise ShapeMismatchError(f"mask must be 2-D, got shape {arr.shape}")
    return arr != 0 if arr.dtype != bool else arr


def _check_same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ShapeMismatchError(f"mask shapes differ: {a.shape} vs {b.shape}")


def dice(mask_a, mask_b) -> float:
    """Overlap index 2*TP / ((TP+FP) + (TP+FN)).

    Two empty masks agree perfectly (1.0); exactly one empty scores 0.0.
    """
    a, b = _as_bool(mask_a), _as_bool(mask_b)
    _check_same_shape(a, b)
    sum_a, sum_b = int(a.sum()), int(b.sum())
    if sum_a == 0 and sum_b == 0:
        return 1.0
    tp = int((a & b).sum())
    return 2.0 * tp / (sum_a + sum_b)


def centroid(mask) -> tuple[float, float]:
    """Center of mass (row, col) of a non-empty binary mask."""
    a = _as_bool(mask)
    if not a.any():
        raise ParameterError("centroid of an empty mask is undefined")
    rows, cols = np.nonzero(a)
    return float(rows.mean()), float(cols.mean())


def center_error(mask_a, mask_b, image_shape) -> float:
    """Centroid distance as percent of the image diagonal sqrt(H^2 + W^2).

    On square a-by-a images the normalizer reduces to sqrt(2)*a. Raises
    for empty masks; callers record those as degenerate instead.
    """
    a, b = _as_bool(mask_a), _as_bool(mask_b)
    _check_same_shape(a, b)
    ca, cb = centroid(a), centroid(b)
    h, w = image_shape
    diagonal = math.hypot(h, w)
    return math.hypot(ca[0] - cb[0], ca[1] - cb[1]) / diagonal * 100.0


def area_index(mask_a, mask_b, image_shape) -> float:
    """Absolute area difference as percent of the image area H*W."""
    a, b = _as_bool(mask_a), _as_bool(mask_b)
    _check_same_shape(a, b)
    h, w = image_shape
    return abs(int(a.sum()) - int(b.sum())) / float(h * w) * 100.0


def largest_component(mask) -> np.ndarray:
    """Largest 8-connected component of a mask (empty stays empty)."""
    a = _as_bool(mask)
    if not a.any():
        return a.copy()
    labels, n = ndimage.label(a, structure=np.ones((3, 3)))
    counts = np.bincount(labels.ravel())
    counts[0] = 0
    return labels == int(counts.argmax())


@dataclass
class LesionMetrics:
    """Per-case scores against one reference mask."""

    dice: float
    center_error_pct: float | None
    area_index_pct: float
    reference_kind: str
    degenerate: bool = False

    def __post_init__(self):
        if self.reference_kind not in REFERENCE_KINDS:
            raise ParameterError(f"unknown reference kind {self.reference_kind!r}")
        if not 0.0 <= self.dice <= 1.0:
            raise ParameterError(f"dice out of range: {self.dice}")
        if self.degenerate and self.center_error_pct is not None:
            raise ParameterError("degenerate records carry no center error")


@dataclass
class MetricRecord:
    """LesionMetrics plus case identity, the unit rows of the report CSV."""

    id: str
    class_label: str
    reference_kind: str
    dice: float
    center_error_pct: float | None
    area_index_pct: float
    degenerate: bool


def compute_lesion_metrics(
    generated,
    reference,
    image_shape,
    reference_kind: str,
    use_largest_component: bool = False,
) -> LesionMetrics:
    """All three indices for one mask pair; empty masks flag the record
    degenerate rather than fabricating a center error."""
    a, b = _as_bool(generated), _as_bool(reference)
    _check_same_shape(a, b)
    if use_largest_component:
        a, b = largest_component(a), largest_component(b)
    degenerate = not a.any() or not b.any()
    return LesionMetrics(
        dice=dice(a, b),
        center_error_pct=None if degenerate else center_error(a, b, image_shape),
        area_index_pct=area_index(a, b, image_shape),
        reference_kind=reference_kind,
        degenerate=degenerate,
    )


METRIC_NAMES = ("dice", "center_error_pct", "area_index_pct")
POOLED_CLASSES = ("benign", "malignant")
ALL_LABEL = "all"


@dataclass
class GroupStats:
    median: float
    mean: float
    std: float
    n: int


@dataclass
class GroupSummary:
    """Stats per (metric, class, reference kind) plus degenerate counts."""

    stats: dict[tuple[str, str, str], GroupStats]
    degenerate_counts: dict[tuple[str, str], int]
    classes: list[str]
    reference_kinds: list[str]
    std_mode: str = "population"


def _stats(values: list[float], std_mode: str) -> GroupStats:
    arr = np.asarray(values, dtype=np.float64)
    ddof = 0 if std_mode == "population" else 1
    std = float(arr.std(ddof=ddof)) if len(arr) > ddof else 0.0
    return GroupStats(
        median=float(np.median(arr)), mean=float(arr.mean()), std=std, n=len(arr)
    )


def summarize(records: list[MetricRecord], std_mode: str = "population") -> GroupSummary:
    """Aggregate records into Table-style group statistics.

    The 'all' group pools benign and malignant only (normal cases lack a
    reference lesion); degenerate records are excluded from center-error
    aggregates and counted separately.
    """
    if not records:
        raise ParameterError("summarize needs at least one record")
    if std_mode not in ("population", "sample"):
        raise ParameterError(f"unknown std mode {std_mode!r}")
    kinds = sorted({r.reference_kind for r in records})
    class_order = [
        c
        for c in ("benign", "malignant", "normal")
        if any(r.class_label == c for r in records)
    ]
    groups: dict[str, list[MetricRecord]] = {c: [] for c in class_order}
    for r in records:
        groups[r.class_label].append(r)
    pooled = [r for r in records if r.class_label in POOLED_CLASSES]
    if pooled:
        groups[ALL_LABEL] = pooled
        class_order = class_order + [ALL_LABEL]
    stats: dict[tuple[str, str, str], GroupStats] = {}
    degenerate_counts: dict[tuple[str, str], int] = {}
    for cls, members in groups.items():
        for kind in kinds:
            sub = [r for r in members if r.reference_kind == kind]
            if not sub:
                continue
            degenerate_counts[(cls, kind)] = sum(r.degenerate for r in sub)
            for metric in METRIC_NAMES:
                if metric == "center_error_pct":
                    values = [r.center_error_pct for r in sub if not r.degenerate]
                else:
                    values = [getattr(r, metric) for r in sub]
                if values:
                    stats[(metric, cls, kind)] = _stats(values, std_mode)
    return GroupSummary(
        stats=stats,
        degenerate_counts=degenerate_counts,
        classes=class_order,
        reference_kinds=kinds,
        std_mode=std_mode,
    )


CSV_COLUMNS = (
    "id",
    "class",
    "reference_kind",
    "dice",
    "center_error_pct",
    "area_index_pct",
    "degenerate",
)


def records_to_csv(records: list[MetricRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(CSV_COLUMNS)
    for r in records:
        writer.writerow(
            [
                r.id,
                r.class_label,
                r.reference_kind,
                f"{r.dice:.9f}",
                "" if r.center_error_pct is None else f"{r.center_error_pct:.9f}",
                f"{r.area_index_pct:.9f}",
                int(r.degenerate),
            ]
        )
    return buf.getvalue()


def write_records_csv(records: list[MetricRecord], path) -> None:
    Path(path).write_text(records_to_csv(records), encoding="utf-8")


def read_records_csv(path) -> list[MetricRecord]:
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            ce = row["center_error_pct"]
            records.append(
                MetricRecord(
                    id=row["id"],
                    class_label=row["class"],
                    reference_kind=row["reference_kind"],
                    dice=float(row["dice"]),
                    center_error_pct=None if ce == "" else float(ce),
                    area_index_pct=float(row["area_index_pct"]),
                    degenerate=bool(int(row["degenerate"])),
                )
            )
    return records


def summary_to_dict(summary: GroupSummary) -> dict:
    return {
        "std_mode": summary.std_mode,
        "classes": summary.classes,
        "reference_kinds": summary.reference_kinds,
        "stats": [
            {"metric": m, "class": c, "reference_kind": k, **asdict(s)}
            for (m, c, k), s in sorted(summary.stats.items())
        ],
        "degenerate_counts": [
            {"class": c, "reference_kind": k, "count": n}
            for (c, k), n in sorted(summary.degenerate_counts.items())
        ],
    }


def write_summary_json(summary: GroupSummary, path) -> None:
    Path(path).write_text(
        json.dumps(summary_to_dict(summary), indent=2) + "\n", encoding="utf-8"
    )


_METRIC_TITLES = {
    "dice": "Dice",
    "center_error_pct": "Center error [%]",
    "area_index_pct": "Area index [%]",
}


def summary_to_markdown(summary: GroupSummary) -> str:
    """Render the summary as a markdown table in the grouped-report layout:
    one row per (metric, class), median and mean +/- std per reference kind."""
    kinds = summary.reference_kinds
    header = ["Metric", "Tumor type"]
    header += [f"Median {k}" for k in kinds]
    header += [f"mean ± std {k}" for k in kinds]
    lines = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
    for metric in METRIC_NAMES:
        first = True
        for cls in summary.classes:
            cells = [_METRIC_TITLES[metric] if first else "", cls]
            present = False
            for k in kinds:
                s = summary.stats.get((metric, cls, k))
                cells.append("" if s is None else f"{s.median:.2f}")
                present = present or s is not None
            for k in kinds:
                s = summary.stats.get((metric, cls, k))
                cells.append("" if s is None else f"{s.mean:.2f} ± {s.std:.2f}")
            if present:
                lines.append("| " + " | ".join(cells) + " |")
                first = False
    return "\n".join(lines) + "\n"


def write_distribution_plots(records: list[MetricRecord], outdir) -> list[Path]:
    """One histogram per metric, grouped by class and reference kind."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = []
    for metric in METRIC_NAMES:
        fig, ax = plt.subplots(figsize=(6, 4))
        for kind in sorted({r.reference_kind for r in records}):
            for cls in sorted({r.class_label for r in records}):
                values = [
                    getattr(r, metric)
                    for r in records
                    if r.class_label == cls
                    and r.reference_kind == kind
                    and getattr(r, metric) is not None
                ]
                if values:
                    ax.hist(values, bins=20, alpha=0.5, label=f"{cls}/{kind}")
        ax.set_xlabel(_METRIC_TITLES[metric])
        ax.set_ylabel("cases")
        ax.legend(fontsize=8)
        fig.tight_layout()
        path = outdir / f"distribution_{metric}.png"
        fig.savefig(path)
        plt.close(fig)
        paths.append(path)
    return paths
