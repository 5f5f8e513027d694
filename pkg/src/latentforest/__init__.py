"""Latent-space tree diffusion for imbalanced tabular data."""

__version__ = "0.1.0"
