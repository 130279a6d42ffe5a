"""Robust relay placement for line-of-sight constrained indoor mmWave networks."""

__version__ = "0.1.0"
