"""Induced edge-count statistics of k-vertex subsets."""

__version__ = "0.1.0"
