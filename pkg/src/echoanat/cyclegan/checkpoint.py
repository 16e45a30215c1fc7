"""Versioned, checksummed checkpoint container.

Layout: magic (4 bytes) | format version (uint32 LE) | sha256 of payload
(32 bytes) | payload. The payload is a torch-serialized dict holding the
architecture descriptor, parameter and optimizer state, loss weights and
counters. A truncated or altered file fails the checksum before any state
is restored.
"""
from __future__ import annotations

import hashlib
import io
import struct
from dataclasses import asdict
from pathlib import Path

import torch

from ..errors import CheckpointChecksumError, CheckpointVersionError
from .losses import LossWeights
from .networks import ArchSpec, ModelBundle
from .training import TrainState

MAGIC = b"EANM"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sI32s")


def save_checkpoint(state: TrainState, path) -> None:
    payload_dict = {
        "arch": state.bundle.arch.as_dict(),
        "weights": asdict(state.weights),
        "gan_loss": state.gan_loss,
        "step": state.step,
        "epoch": state.epoch,
        "networks": {k: v.state_dict() for k, v in state.bundle.networks().items()},
        "optimizers": {
            "g": state.opt_g.state_dict(),
            "d_pa": state.opt_d_pa.state_dict(),
            "d_us": state.opt_d_us.state_dict(),
        },
        "lr": state.opt_g.param_groups[0]["lr"],
        "betas": state.opt_g.param_groups[0]["betas"],
        "pool_capacity": state.pool_pa.capacity,
    }
    buf = io.BytesIO()
    torch.save(payload_dict, buf)
    payload = buf.getvalue()
    header = _HEADER.pack(MAGIC, FORMAT_VERSION, hashlib.sha256(payload).digest())
    Path(path).write_bytes(header + payload)


def load_checkpoint(path) -> TrainState:
    """Restore a TrainState (parameters bit-exact, counters preserved)."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size or raw[:4] != MAGIC:
        raise CheckpointChecksumError(f"{path} is not a checkpoint file")
    magic, version, digest = _HEADER.unpack(raw[: _HEADER.size])
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(
            f"{path} has format version {version}; this reader supports {FORMAT_VERSION}"
        )
    payload = raw[_HEADER.size :]
    if hashlib.sha256(payload).digest() != digest:
        raise CheckpointChecksumError(f"{path} failed its checksum (truncated or corrupt)")
    # integrity established above, so the pickle payload is trusted
    data = torch.load(io.BytesIO(payload), weights_only=False)
    arch = ArchSpec.from_dict(data["arch"])
    state = TrainState.create(
        arch,
        weights=LossWeights(**data["weights"]),
        lr=data["lr"],
        betas=tuple(data["betas"]),
        pool_capacity=data["pool_capacity"],
        gan_loss=data["gan_loss"],
    )
    for key, net in state.bundle.networks().items():
        net.load_state_dict(data["networks"][key])
    state.opt_g.load_state_dict(data["optimizers"]["g"])
    state.opt_d_pa.load_state_dict(data["optimizers"]["d_pa"])
    state.opt_d_us.load_state_dict(data["optimizers"]["d_us"])
    state.step = data["step"]
    state.epoch = data["epoch"]
    state.bundle.steps_trained = data["step"]
    return state
