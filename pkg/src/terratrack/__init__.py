"""Threshold-adaptive 3D multi-object tracking, memory-retrieval trajectory prediction and tracking-driven static mapping."""

__version__ = "0.1.0"
