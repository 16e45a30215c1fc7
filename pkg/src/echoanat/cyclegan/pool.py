"""History buffer of generated images for discriminator updates."""
from __future__ import annotations

import numpy as np
import torch

from ..errors import ParameterError


class ImagePool:
    """Fixed-capacity buffer of past fakes.

    While filling, fresh images are stored and returned as-is. Once full,
    each incoming image is swapped for a stored one with probability 1/2;
    the buffer never exceeds its capacity.
    """

    def __init__(self, capacity: int = 50, rng: np.random.Generator | None = None):
        if capacity < 0:
            raise ParameterError(f"pool capacity must be >= 0, got {capacity}")
        self.capacity = capacity
        self.images: list[torch.Tensor] = []
        self.rng = rng if rng is not None else np.random.default_rng()

    def __len__(self) -> int:
        return len(self.images)

    def query(self, fresh: torch.Tensor) -> torch.Tensor:
        """Return one image per incoming fake, mixing in history once full."""
        if fresh.ndim != 4:
            raise ParameterError(f"expected (N, C, H, W) fakes, got {tuple(fresh.shape)}")
        if self.capacity == 0:
            return fresh
        out = []
        for i in range(fresh.shape[0]):
            item = fresh[i].detach()
            if len(self.images) < self.capacity:
                self.images.append(item.clone())
                out.append(item)
            elif self.rng.random() < 0.5:
                idx = int(self.rng.integers(len(self.images)))
                out.append(self.images[idx])
                self.images[idx] = item.clone()
            else:
                out.append(item)
        return torch.stack(out, dim=0)
