"""Orchestration: configuration, CLI commands, run directories, HTTP API."""

from .config import RunConfig, load_config, save_config
from .rle import decode_mask, encode_mask

__all__ = ["RunConfig", "load_config", "save_config", "decode_mask", "encode_mask"]
