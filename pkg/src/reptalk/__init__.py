"""Cutoff equilibria of reputational cheap talk with privately informed experts."""

__version__ = "0.1.0"
