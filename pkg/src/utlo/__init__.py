"""Unconditional training at lower resolutions for long-tailed class-conditional GANs."""

__version__ = "0.1.0"
