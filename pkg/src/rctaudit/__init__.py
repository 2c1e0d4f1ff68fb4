"""Worst-case audit of covariate balancing in randomized controlled trials."""

__version__ = "0.1.0"
