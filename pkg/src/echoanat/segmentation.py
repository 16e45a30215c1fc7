"""Edge-stopping maps and morphological geodesic active contours.

The contour is a binary grid evolved by three morphological sub-steps per
iteration: a balloon force (dilation or erosion gated by the edge map), a
gradient attachment that snaps the front onto edges, and curvature
smoothing via alternating sup-of-inf / inf-of-sup passes over four 3-pixel
line structuring elements.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import EchoAnatError, ParameterError, SeedingError, ShapeMismatchError
from .grids import ImageGrid, LevelSet


@dataclass
class EdgeMap:
    """Edge-stopping map g in (0, 1]: 1 on flat regions, small near edges."""

    g: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.g, dtype=np.float64)
        if arr.ndim != 2:
            raise ShapeMismatchError(f"edge map must be 2-D, got shape {arr.shape}")
        self.g = arr


@dataclass
class GACParams:
    """Contour evolution parameters.

    The algorithm's source names no defaults; these are chosen so the disk
    phantom oracle converges and are exposed through config, CLI and API.
    """

    iterations: int = 200
    smoothing: int = 1
    balloon: float = 1.0
    threshold: float = 0.3
    early_stop_window: int = 10
    alpha: float = 100.0
    sigma: float = 1.5

    def __post_init__(self):
        if self.iterations < 1:
            raise ParameterError(f"iterations must be >= 1, got {self.iterations}")
        if self.smoothing < 0:
            raise ParameterError(f"smoothing must be >= 0, got {self.smoothing}")
        if not 0.0 < self.threshold < 1.0:
            raise ParameterError(f"threshold must be in (0, 1), got {self.threshold}")
        if self.early_stop_window < 1:
            raise ParameterError("early_stop_window must be >= 1")
        if self.alpha <= 0 or self.sigma <= 0:
            raise ParameterError(
                f"alpha and sigma must be positive, got alpha={self.alpha}, sigma={self.sigma}"
            )


@dataclass(frozen=True)
class CircleSeed:
    center: tuple[float, float]  # (row, col)
    radius: float


@dataclass
class MaskSeed:
    mask: LevelSet


InitSpec = CircleSeed | MaskSeed


def _to_gray(image) -> np.ndarray:
    if isinstance(image, ImageGrid):
        return image.luminance().astype(np.float64)
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim == 3:
        return ImageGrid(arr).luminance().astype(np.float64)
    if arr.ndim != 2:
        raise ShapeMismatchError(f"expected a 2-D or (H, W, C) image, got {arr.shape}")
    return arr


def inverse_gaussian_gradient(image, alpha: float = 100.0, sigma: float = 1.5) -> EdgeMap:
    """g = 1 / sqrt(1 + alpha * |grad(G_sigma * I)|) with I in [0, 1].

    Tri-channel input is reduced to luminance first. The gradient uses
    derivative-of-Gaussian filtering with replicated borders, so constant
    images map to exactly 1 everywhere.
    """
    if alpha <= 0:
        raise ParameterError(f"alpha must be positive, got {alpha}")
    if sigma <= 0:
        raise ParameterError(f"sigma must be positive, got {sigma}")
    gray = _to_gray(image)
    magnitude = ndimage.gaussian_gradient_magnitude(gray, sigma, mode="nearest")
    return EdgeMap(1.0 / np.sqrt(1.0 + alpha * magnitude))


def init_level_set(spec: InitSpec, shape) -> LevelSet:
    """Rasterize a circle seed, or pass an explicit seed mask through."""
    h, w = shape
    if isinstance(spec, MaskSeed):
        if spec.mask.shape != (h, w):
            raise ShapeMismatchError(
                f"seed mask shape {spec.mask.shape} does not match image shape {(h, w)}"
            )
        return LevelSet(spec.mask.u.copy())
    cy, cx = spec.center
    r = spec.radius
    if r <= 0:
        raise ParameterError(f"seed radius must be positive, got {r}")
    if cy - r < 0 or cx - r < 0 or cy + r > h - 1 or cx + r > w - 1:
        raise ParameterError(
            f"seed circle (center ({cy:.1f}, {cx:.1f}), radius {r:.1f}) exceeds "
            f"image bounds {h}x{w}"
        )
    rows, cols = np.mgrid[0:h, 0:w]
    return LevelSet((rows - cy) ** 2 + (cols - cx) ** 2 <= r**2)


def replicated_gradient(f: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Central differences with border replication, per axis."""
    f = np.asarray(f, dtype=np.float64)
    padded = np.pad(f, 1, mode="edge")
    gy = (padded[2:, 1:-1] - padded[:-2, 1:-1]) / 2.0
    gx = (padded[1:-1, 2:] - padded[1:-1, :-2]) / 2.0
    return gy, gx


# Four 3-pixel line structuring elements: main diagonal, vertical,
# anti-diagonal, horizontal.
_LINE_SES = [
    np.eye(3, dtype=bool),
    np.array([[0, 1, 0]] * 3, dtype=bool),
    np.flipud(np.eye(3)).astype(bool),
    np.rot90([[0, 1, 0]] * 3).astype(bool),
]

# Balloon structuring element: full 3x3 square, as in the algorithm's
# reference implementation; one dilation grows a 3x3 square seed to 5x5.
_BALLOON_SE = np.ones((3, 3), dtype=bool)


def sup_inf(u: np.ndarray) -> np.ndarray:
    """Supremum over erosions by the four line elements."""
    out = np.zeros_like(u, dtype=bool)
    for se in _LINE_SES:
        out |= ndimage.binary_erosion(u, se)
    return out


def inf_sup(u: np.ndarray) -> np.ndarray:
    """Infimum over dilations by the four line elements."""
    out = np.ones_like(u, dtype=bool)
    for se in _LINE_SES:
        out &= ndimage.binary_dilation(u, se)
    return out


def _curvature_op(u: np.ndarray, phase: int) -> np.ndarray:
    return sup_inf(inf_sup(u)) if phase % 2 == 0 else inf_sup(sup_inf(u))


def morphgac_step(
    u: LevelSet,
    g: EdgeMap,
    grad_g: tuple[np.ndarray, np.ndarray],
    params: GACParams,
    curvature_phase: int = 0,
) -> LevelSet:
    """One evolution iteration: balloon, attachment, curvature smoothing.

    ``curvature_phase`` selects which of the two alternating smoothing
    compositions starts this step; callers iterating should advance it by
    ``params.smoothing`` per step.
    """
    arr = u.u
    gy, gx = grad_g
    if g.g.shape != arr.shape or gy.shape != arr.shape or gx.shape != arr.shape:
        raise ShapeMismatchError(
            f"level set {arr.shape}, edge map {g.g.shape} and gradient "
            f"{gy.shape} must share a shape"
        )
    if params.balloon > 0:
        aux = ndimage.binary_dilation(arr, _BALLOON_SE)
    elif params.balloon < 0:
        aux = ndimage.binary_erosion(arr, _BALLOON_SE)
    if params.balloon != 0:
        gate = g.g > params.threshold / abs(params.balloon)
        arr = np.where(gate, aux, arr)
    duy, dux = replicated_gradient(arr.astype(np.float64))
    dot = gy * duy + gx * dux
    arr = arr.copy()
    arr[dot > 0] = True
    arr[dot < 0] = False
    for k in range(params.smoothing):
        arr = _curvature_op(arr, curvature_phase + k)
    if arr.dtype != bool:
        raise EchoAnatError("internal invariant violated: non-binary level set")
    return LevelSet(arr)


@dataclass
class SegmentationResult:
    mask: LevelSet
    iterations: int
    trace: list[LevelSet] = field(default_factory=list)


def morphgac_run(
    image_or_edgemap,
    init: InitSpec,
    params: GACParams = GACParams(),
    trace_every: int = 0,
    on_iteration=None,
) -> SegmentationResult:
    """Evolve the contour up to ``params.iterations`` steps.

    Accepts either an image (the edge map is built with the params' alpha
    and sigma) or a prebuilt ``EdgeMap``. Stops early once the level set is
    unchanged for ``early_stop_window`` consecutive iterations. When
    ``trace_every`` = k > 0, every k-th state plus the final one is kept
    for playback.
    """
    if isinstance(image_or_edgemap, EdgeMap):
        edge = image_or_edgemap
    else:
        edge = inverse_gaussian_gradient(image_or_edgemap, params.alpha, params.sigma)
    grad_g = replicated_gradient(edge.g)
    u = init_level_set(init, edge.g.shape)
    trace: list[LevelSet] = []
    unchanged = 0
    iterations_run = 0
    phase = 0
    for i in range(1, params.iterations + 1):
        new = morphgac_step(u, edge, grad_g, params, curvature_phase=phase)
        phase += params.smoothing
        iterations_run = i
        unchanged = unchanged + 1 if np.array_equal(new.u, u.u) else 0
        u = new
        if trace_every > 0 and i % trace_every == 0:
            trace.append(LevelSet(u.u.copy()))
        if on_iteration is not None:
            on_iteration(i, params.iterations)
        if unchanged >= params.early_stop_window:
            break
    if trace_every > 0 and (not trace or trace[-1] != u):
        trace.append(LevelSet(u.u.copy()))
    return SegmentationResult(mask=u, iterations=iterations_run, trace=trace)


def seed_from_mask(mask: LevelSet, min_radius: float = 2.0) -> CircleSeed:
    """Circle seed at a mask's center of mass, sized from its inscribed disk.

    The radius is half the maximal inscribed-disk radius, clamped to at
    least ``min_radius``; a centroid falling outside the foreground (e.g.
    crescents) is recentered to the nearest foreground pixel. The circle
    is shifted inward if the clamp would push it past the image border.
    """
    arr = mask.u
    if not arr.any():
        raise SeedingError("cannot derive a seed from an empty mask")
    h, w = arr.shape
    rows, cols = np.nonzero(arr)
    cy, cx = float(rows.mean()), float(cols.mean())
    iy, ix = int(round(cy)), int(round(cx))
    iy, ix = min(max(iy, 0), h - 1), min(max(ix, 0), w - 1)
    if not arr[iy, ix]:
        d2 = (rows - cy) ** 2 + (cols - cx) ** 2
        j = int(d2.argmin())
        cy, cx = float(rows[j]), float(cols[j])
    inscribed = float(ndimage.distance_transform_edt(arr).max())
    radius = max(inscribed / 2.0, min_radius)
    radius = min(radius, (min(h, w) - 1) / 2.0)
    cy = min(max(cy, radius), h - 1 - radius)
    cx = min(max(cx, radius), w - 1 - radius)
    return CircleSeed(center=(cy, cx), radius=radius)
