"""Spectrum-conditioned molecular graph generation with many-body discrete diffusion."""

__version__ = "0.1.0"
