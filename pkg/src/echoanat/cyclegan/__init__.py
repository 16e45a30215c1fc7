"""Dual-GAN translation model: networks, losses, training, persistence."""

from .checkpoint import FORMAT_VERSION, load_checkpoint, save_checkpoint
from .losses import (
    GAN_LOSS_MODES,
    ImageBatch,
    LossWeights,
    adversarial_loss_d,
    adversarial_loss_g,
    cycle_loss,
    negate,
    opposite_loss,
    total_generator_loss,
)
from .networks import PRESETS, ArchSpec, Discriminator, Generator, ModelBundle, preset
from .pool import ImagePool
from .training import BatchFeed, LossRecord, TrainState, train_step, write_history_csv
from .translate import translate, translate_with

__all__ = [
    "FORMAT_VERSION",
    "GAN_LOSS_MODES",
    "PRESETS",
    "ArchSpec",
    "BatchFeed",
    "Discriminator",
    "Generator",
    "ImageBatch",
    "ImagePool",
    "LossRecord",
    "LossWeights",
    "ModelBundle",
    "TrainState",
    "adversarial_loss_d",
    "adversarial_loss_g",
    "cycle_loss",
    "load_checkpoint",
    "negate",
    "opposite_loss",
    "preset",
    "save_checkpoint",
    "total_generator_loss",
    "train_step",
    "translate",
    "translate_with",
    "write_history_csv",
]
