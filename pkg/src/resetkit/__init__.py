"""Frequency-domain analysis and nonlinearity shaping for closed-loop reset control."""

__version__ = "0.1.0"
