"""Simulation and training toolkit for deep-learning-assisted photonic analog-to-digital conversion."""

__version__ = "1.0.0"
