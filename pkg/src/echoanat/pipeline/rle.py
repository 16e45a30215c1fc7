"""Run-length wire format for binary masks.

Row-major scan, alternating run lengths starting with the zero-run (a
leading foreground pixel is encoded by a zero-length first run). The
header carries the grid shape; runs must sum to H*W exactly.
"""
from __future__ import annotations

import numpy as np

from ..errors import ParameterError
from ..grids import LevelSet


def encode_mask(mask) -> dict:
    arr = mask.u if isinstance(mask, LevelSet) else np.asarray(mask) != 0
    if arr.ndim != 2:
        raise ParameterError(f"mask must be 2-D, got shape {arr.shape}")
    h, w = arr.shape
    flat = arr.ravel()
    changes = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    boundaries = np.concatenate(([0], changes, [flat.size]))
    runs = np.diff(boundaries).tolist()
    if flat[0]:
        runs = [0] + runs
    return {"height": int(h), "width": int(w), "runs": [int(r) for r in runs]}


def decode_mask(payload: dict) -> LevelSet:
    try:
        h, w, runs = int(payload["height"]), int(payload["width"]), payload["runs"]
    except (KeyError, TypeError) as exc:
        raise ParameterError(f"malformed RLE payload: {exc}") from exc
    if h < 1 or w < 1:
        raise ParameterError(f"invalid RLE shape {h}x{w}")
    runs = [int(r) for r in runs]
    if any(r < 0 for r in runs):
        raise ParameterError("RLE runs must be non-negative")
    if sum(runs) != h * w:
        raise ParameterError(f"RLE runs sum to {sum(runs)}, expected {h * w}")
    flat = np.zeros(h * w, dtype=bool)
    pos = 0
    value = False
    for run in runs:
        if value:
            flat[pos : pos + run] = True
        pos += run
        value = not value
    return LevelSet(flat.reshape(h, w))
