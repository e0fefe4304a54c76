"""Snapshot HDR reconstruction from multi-exposure CFA RAW data."""

__version__ = "0.1.0"
