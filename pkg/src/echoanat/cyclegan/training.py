"""Training state and the alternating generator / discriminator step."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from ..errors import ParameterError, TrainingDivergedError
from .losses import ImageBatch, LossWeights, adversarial_loss_d, generator_objective
from .networks import ArchSpec, ModelBundle
from .pool import ImagePool

HISTORY_COLUMNS = (
    "step",
    "L_adv_d_PA",
    "L_adv_d_US",
    "L_adv_g",
    "L_cycle",
    "L_opposite",
    "total",
)


@dataclass
class LossRecord:
    step: int
    adv_d_pa: float
    adv_d_us: float
    adv_g: float
    cycle: float
    opposite: float
    total: float

    def as_row(self) -> list:
        return [
            self.step,
            self.adv_d_pa,
            self.adv_d_us,
            self.adv_g,
            self.cycle,
            self.opposite,
            self.total,
        ]


@dataclass
class TrainState:
    """Everything mutated across steps: nets, optimizers, pools, counters."""

    bundle: ModelBundle
    weights: LossWeights
    opt_g: torch.optim.Optimizer
    opt_d_pa: torch.optim.Optimizer
    opt_d_us: torch.optim.Optimizer
    pool_pa: ImagePool
    pool_us: ImagePool
    gan_loss: str = "log"
    step: int = 0
    epoch: int = 0
    history: list[LossRecord] = field(default_factory=list)

    @classmethod
    def create(
        cls,
        arch: ArchSpec,
        weights: LossWeights = LossWeights(),
        lr: float = 2e-4,
        betas: tuple[float, float] = (0.5, 0.999),
        pool_capacity: int = 50,
        gan_loss: str = "log",
        seed: int = 0,
    ) -> "TrainState":
        bundle = ModelBundle.create(arch, seed=seed)
        pool_rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(2)[1])
        return cls(
            bundle=bundle,
            weights=weights,
            opt_g=torch.optim.Adam(bundle.generator_parameters(), lr=lr, betas=betas),
            opt_d_pa=torch.optim.Adam(bundle.d_pa.parameters(), lr=lr, betas=betas),
            opt_d_us=torch.optim.Adam(bundle.d_us.parameters(), lr=lr, betas=betas),
            pool_pa=ImagePool(pool_capacity, np.random.default_rng(pool_rng.integers(2**31))),
            pool_us=ImagePool(pool_capacity, np.random.default_rng(pool_rng.integers(2**31))),
            gan_loss=gan_loss,
        )


def _require_finite(value: float, name: str, components: dict) -> None:
    if not math.isfinite(value):
        raise TrainingDivergedError(
            f"non-finite {name} at training step; component losses: {components}",
            components=components,
        )


def train_step(state: TrainState, x_batch: ImageBatch, y_batch: ImageBatch) -> LossRecord:
    """One generator update followed by one update per discriminator.

    Generators see fresh fakes; discriminators see pool-sampled fakes.
    A non-finite loss aborts the step before any parameter update, carrying
    the full component breakdown in the raised error.
    """
    if x_batch.domain != "us" or y_batch.domain != "pa":
        raise ParameterError(
            f"train_step expects (us, pa) batches, got ({x_batch.domain!r}, {y_batch.domain!r})"
        )
    bundle = state.bundle
    x, y = x_batch.tensor, y_batch.tensor

    total, parts, fake_y, fake_x = generator_objective(
        bundle, state.weights, x, y, state.gan_loss
    )
    _require_finite(parts["total"], "generator loss", parts)
    state.opt_g.zero_grad(set_to_none=True)
    total.backward()
    state.opt_g.step()

    losses_d = {}
    for name, disc, opt, pool, real, fake in (
        ("adv_d_pa", bundle.d_pa, state.opt_d_pa, state.pool_pa, y, fake_y),
        ("adv_d_us", bundle.d_us, state.opt_d_us, state.pool_us, x, fake_x),
    ):
        pooled = pool.query(fake.detach())
        loss_d = adversarial_loss_d(disc, real, pooled, state.gan_loss)
        losses_d[name] = float(loss_d.detach())
        _require_finite(losses_d[name], name, {**parts, **losses_d})
        opt.zero_grad(set_to_none=True)
        loss_d.backward()
        opt.step()

    state.step += 1
    bundle.steps_trained = state.step
    record = LossRecord(
        step=state.step,
        adv_d_pa=losses_d["adv_d_pa"],
        adv_d_us=losses_d["adv_d_us"],
        adv_g=parts["adv_g"],
        cycle=parts["cycle"],
        opposite=parts["opposite"],
        total=parts["total"],
    )
    state.history.append(record)
    return record


def write_history_csv(records: list[LossRecord], path, append: bool = False) -> None:
    """Loss history CSV with one row per step."""
    path = Path(path)
    new_file = not (append and path.exists())
    with open(path, "a" if append else "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        if new_file:
            writer.writerow(HISTORY_COLUMNS)
        for r in records:
            writer.writerow(
                [r.step] + [f"{v:.6f}" for v in r.as_row()[1:]]
            )


def read_history_csv(path) -> list[LossRecord]:
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            records.append(
                LossRecord(
                    step=int(row["step"]),
                    adv_d_pa=float(row["L_adv_d_PA"]),
                    adv_d_us=float(row["L_adv_d_US"]),
                    adv_g=float(row["L_adv_g"]),
                    cycle=float(row["L_cycle"]),
                    opposite=float(row["L_opposite"]),
                    total=float(row["total"]),
                )
            )
    return records


class BatchFeed:
    """Seed-deterministic unpaired batch pairing over two image stacks.

    Each epoch reshuffles both domains independently and yields
    ``(ImageBatch us, ImageBatch pa)`` pairs of at most ``batch_size``.
    """

    def __init__(self, us: torch.Tensor, pa: torch.Tensor, batch_size: int, seed: int):
        if us.ndim != 4 or pa.ndim != 4:
            raise ParameterError("expected (N, C, H, W) image stacks")
        if batch_size < 1:
            raise ParameterError("batch_size must be >= 1")
        self.us = us
        self.pa = pa
        self.batch_size = batch_size
        self.rng = np.random.default_rng(seed)

    def epoch(self):
        n = min(self.us.shape[0], self.pa.shape[0])
        order_us = self.rng.permutation(self.us.shape[0])[:n]
        order_pa = self.rng.permutation(self.pa.shape[0])[:n]
        for start in range(0, n, self.batch_size):
            sl_us = order_us[start : start + self.batch_size]
            sl_pa = order_pa[start : start + self.batch_size]
            yield (
                ImageBatch(self.us[sl_us], "us"),
                ImageBatch(self.pa[sl_pa], "pa"),
            )
