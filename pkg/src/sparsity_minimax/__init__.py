"""Minimax tests and estimators for the sparsity of a Gaussian mean vector."""

__version__ = "0.1.0"
