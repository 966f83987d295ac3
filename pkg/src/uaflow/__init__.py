"""Unsupervised assignment flow on feature manifolds."""

__version__ = "0.1.0"
