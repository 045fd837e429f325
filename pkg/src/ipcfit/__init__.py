"""Estimate the infinite-data information processing capacity of reservoirs."""

__version__ = "0.1.0"
