"""Adversarial, cycle-reconstruction and opposite-contrast identity losses.

The log form follows the two-player objective with the non-saturating
generator variant -E[log D(fake)]; a least-squares switch matches the
reference training recipe. Discriminator outputs are logit maps, so the
log losses go through logsigmoid for stability.
"""
from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F

from ..errors import ParameterError

GAN_LOSS_MODES = ("log", "least_squares")
DOMAINS = ("us", "pa")


@dataclass
class ImageBatch:
    """(N, C, H, W) tensor in the model range with its domain tag."""

    tensor: torch.Tensor
    domain: str

    def __post_init__(self):
        if self.domain not in DOMAINS:
            raise ParameterError(f"domain must be one of {DOMAINS}, got {self.domain!r}")
        if self.tensor.ndim != 4 or self.tensor.shape[0] < 1:
            raise ParameterError(
                f"batch must be a non-empty (N, C, H, W) tensor, got {tuple(self.tensor.shape)}"
            )
        mn, mx = float(self.tensor.min()), float(self.tensor.max())
        if mn < -1.0 or mx > 1.0:
            raise ParameterError(f"batch outside model range [-1, 1]: min={mn}, max={mx}")


@dataclass
class LossWeights:
    lambda_gan: float = 1.0
    lambda_cycle: float = 10.0
    lambda_opposite: float = 0.3

    def __post_init__(self):
        for name in ("lambda_gan", "lambda_cycle", "lambda_opposite"):
            if getattr(self, name) < 0:
                raise ParameterError(f"{name} must be >= 0, got {getattr(self, name)}")


def negate(batch: torch.Tensor) -> torch.Tensor:
    """Pixelwise v -> -v; an involution on the symmetric model range."""
    return -batch


def _check_batch(t: torch.Tensor, name: str) -> None:
    if t.ndim != 4 or t.shape[0] == 0:
        raise ParameterError(f"{name} must be a non-empty 4-D batch, got {tuple(t.shape)}")


def _check_mode(gan_loss: str) -> None:
    if gan_loss not in GAN_LOSS_MODES:
        raise ParameterError(f"gan_loss must be one of {GAN_LOSS_MODES}, got {gan_loss!r}")


def adversarial_loss_d(disc, real_batch, fake_batch, gan_loss: str = "log") -> torch.Tensor:
    """Discriminator objective over its realness map.

    Log mode: -E[log D(real)] - E[log(1 - D(fake))], which equals 2*ln 2
    when D outputs 0.5 everywhere. The fake batch is detached so no
    gradient reaches the generator that produced it.
    """
    _check_batch(real_batch, "real_batch")
    _check_batch(fake_batch, "fake_batch")
    _check_mode(gan_loss)
    real_map = disc(real_batch)
    fake_map = disc(fake_batch.detach())
    if gan_loss == "log":
        return -F.logsigmoid(real_map).mean() - F.logsigmoid(-fake_map).mean()
    return ((real_map - 1.0) ** 2).mean() + (fake_map**2).mean()


def adversarial_loss_g(disc, fake_batch, gan_loss: str = "log") -> torch.Tensor:
    """Generator fooling objective: -E[log D(fake)] (non-saturating form)."""
    _check_batch(fake_batch, "fake_batch")
    _check_mode(gan_loss)
    fake_map = disc(fake_batch)
    if gan_loss == "log":
        return -F.logsigmoid(fake_map).mean()
    return ((fake_map - 1.0) ** 2).mean()


def cycle_loss(g_pa, g_us, x_batch, y_batch) -> torch.Tensor:
    """Mean L1 of both round trips: x -> PA -> US and y -> US -> PA."""
    _check_batch(x_batch, "x_batch")
    _check_batch(y_batch, "y_batch")
    return (g_us(g_pa(x_batch)) - x_batch).abs().mean() + (
        g_pa(g_us(y_batch)) - y_batch
    ).abs().mean()


def opposite_loss(g_pa, g_us, x_batch, y_batch) -> torch.Tensor:
    """Opposite-contrast identity: each generator fed the negated input
    from its own output domain must reconstruct the original."""
    _check_batch(x_batch, "x_batch")
    _check_batch(y_batch, "y_batch")
    return (g_us(negate(x_batch)) - x_batch).abs().mean() + (
        g_pa(negate(y_batch)) - y_batch
    ).abs().mean()


def generator_objective(bundle, weights: LossWeights, x_batch, y_batch, gan_loss: str = "log"):
    """Weighted generator objective with its component breakdown.

    Returns ``(total, parts, fake_y, fake_x)`` where parts holds raw
    (unweighted) component scalars and the weighted total, and the fakes
    are reused by the discriminator phase.
    """
    _check_batch(x_batch, "x_batch")
    _check_batch(y_batch, "y_batch")
    _check_mode(gan_loss)
    fake_y = bundle.g_pa(x_batch)  # US -> PA
    fake_x = bundle.g_us(y_batch)  # PA -> US
    adv_pa = adversarial_loss_g(bundle.d_pa, fake_y, gan_loss)
    adv_us = adversarial_loss_g(bundle.d_us, fake_x, gan_loss)
    cyc = (bundle.g_us(fake_y) - x_batch).abs().mean() + (
        bundle.g_pa(fake_x) - y_batch
    ).abs().mean()
    opp = opposite_loss(bundle.g_pa, bundle.g_us, x_batch, y_batch)
    total = (
        weights.lambda_gan * (adv_pa + adv_us)
        + weights.lambda_cycle * cyc
        + weights.lambda_opposite * opp
    )
    parts = {
        "adv_g_pa": float(adv_pa.detach()),
        "adv_g_us": float(adv_us.detach()),
        "adv_g": float(adv_pa.detach()) + float(adv_us.detach()),
        "cycle": float(cyc.detach()),
        "opposite": float(opp.detach()),
        "total": float(total.detach()),
    }
    return total, parts, fake_y, fake_x


def total_generator_loss(bundle, weights: LossWeights, x_batch, y_batch, gan_loss: str = "log"):
    """Public wrapper over the objective: (total tensor, breakdown dict)."""
    total, parts, _, _ = generator_objective(bundle, weights, x_batch, y_batch, gan_loss)
    return total, parts
