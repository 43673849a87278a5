"""Blind image watermarking toolkit and surrogate-attack robustness bench."""

__version__ = "0.1.0"
