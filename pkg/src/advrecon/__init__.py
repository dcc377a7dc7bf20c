"""Robust reconstruction for linear inverse problems via min-max training."""

__version__ = "0.1.0"
