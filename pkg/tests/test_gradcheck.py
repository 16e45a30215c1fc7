import time

import numpy as np
import pytest
import torch

from echoanat.cyclegan import LossWeights, preset, total_generator_loss
from echoanat.cyclegan.networks import ModelBundle


def _loss_value(bundle, weights, x, y) -> float:
    with torch.no_grad():
        total, _ = total_generator_loss(bundle, weights, x, y)
    return float(total)


def test_analytic_gradient_matches_central_differences():
    """Finite-difference check of the full generator objective on the
    sub-2k-parameter bundle (eps 1e-3, per-parameter rel. error <= 1e-2)."""
    torch.manual_seed(0)
    start = time.time()
    bundle = ModelBundle.create(preset("tiny"), seed=0)
    assert bundle.num_parameters() <= 2000
    for net in bundle.networks().values():
        net.double()
    weights = LossWeights()
    g = torch.Generator().manual_seed(1)
    x = (torch.rand(2, 3, 8, 8, generator=g, dtype=torch.float64) * 2 - 1) * 0.95
    y = (torch.rand(2, 3, 8, 8, generator=g, dtype=torch.float64) * 2 - 1) * 0.95

    params = list(bundle.generator_parameters())
    total, _ = total_generator_loss(bundle, weights, x, y)
    grads = torch.autograd.grad(total, params)

    flat_grads = torch.cat([gr.reshape(-1) for gr in grads])
    sizes = [p.numel() for p in params]
    offsets = np.cumsum([0] + sizes)
    rng = np.random.default_rng(42)
    picks = rng.choice(int(offsets[-1]), size=120, replace=False)

    eps = 1e-3
    worst = 0.0
    for flat_idx in picks:
        pi = int(np.searchsorted(offsets, flat_idx, side="right") - 1)
        local = int(flat_idx - offsets[pi])
        param = params[pi]
        base = float(param.reshape(-1)[local])
        with torch.no_grad():
            param.reshape(-1)[local] = base + eps
        plus = _loss_value(bundle, weights, x, y)
        with torch.no_grad():
            param.reshape(-1)[local] = base - eps
        minus = _loss_value(bundle, weights, x, y)
        with torch.no_grad():
            param.reshape(-1)[local] = base
        fd = (plus - minus) / (2 * eps)
        analytic = float(flat_grads[flat_idx])
        rel = abs(fd - analytic) / max(abs(fd), abs(analytic), 1e-6)
        worst = max(worst, rel)
        assert rel <= 1e-2, f"param {flat_idx}: analytic {analytic}, fd {fd}, rel {rel}"
    elapsed = time.time() - start
    assert elapsed < 120.0
    assert len(picks) >= 100
