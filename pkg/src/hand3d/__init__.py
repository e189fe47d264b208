"""Deterministic 3D annotation toolkit for human-manipulation clips.

The package turns per-clip records (camera poses, hand joints, metric-free
point rasters, object boxes) into spatial VQA pairs and discretized motion
token sequences, and ships the matching evaluation metrics plus a synthetic
scene generator used as an end-to-end oracle.
"""

__version__ = "0.1.0"
