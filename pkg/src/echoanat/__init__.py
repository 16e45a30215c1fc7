"""Ultrasound-to-pseudo-anatomy translation and lesion-preservation evaluation."""

__version__ = "0.1.0"
