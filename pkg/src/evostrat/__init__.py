"""Genetic tuning of best-first OR-tree search strategies."""

__version__ = "0.1.0"
