"""Deterministic point-cloud geometry kernels."""

from .cloud import PointCloud, RigidTransform, read_cloud, read_drf, read_xyz, write_drf, write_xyz
from .kernels import (
    augment,
    ball_query,
    chamfer_distance,
    chamfer_distance_bruteforce,
    fps_sample,
    refill_to_size,
    rotate_cloud,
    rotation_matrix,
)
from .registration import canonical_resample, rigid_register
from .visibility import default_viewpoint, remove_hidden_points

__all__ = [
    "PointCloud",
    "RigidTransform",
    "read_cloud",
    "read_drf",
    "read_xyz",
    "write_drf",
    "write_xyz",
    "augment",
    "ball_query",
    "chamfer_distance",
    "chamfer_distance_bruteforce",
    "fps_sample",
    "refill_to_size",
    "rotate_cloud",
    "rotation_matrix",
    "canonical_resample",
    "rigid_register",
    "default_viewpoint",
    "remove_hidden_points",
]
