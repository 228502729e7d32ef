"""Robust online subspace tracking from incomplete, outlier-corrupted data."""

__version__ = "0.1.0"
