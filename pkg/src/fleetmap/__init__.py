"""Deterministic multi-vehicle range-aided LiDAR-inertial mapping simulator."""

__version__ = "0.1.0"
