"""Deterministic point-cloud kernels.

Sampling, grouping, Chamfer distance, rotation and augmentation on
``PointCloud`` values. Everything here is a pure function of its inputs.
"""

from __future__ import annotations

from collections.abc import Sequence
from typing import Literal

import numpy as np
from scipy.spatial import cKDTree

from ..errors import InvalidArgumentError
from .cloud import PointCloud

MAX_DROPOUT_RATE = 0.875
SCALE_BOUNDS = (0.8, 1.25)


def fps_sample(cloud: PointCloud, k: int, start: int = 0) -> list[int]:
    """Farthest point sampling.

    Each new index maximises the minimum squared distance to the already
    selected set. Ties go to the lowest index (``argmax`` returns the first
    maximum); selected indices are masked so duplicates never repeat.

    Args:
        cloud: Input cloud
        k: Number of indices, 1 <= k <= N
        start: First index

    Returns:
        k distinct indices, ``start`` first

    Raises:
        InvalidArgumentError: k or start out of range
    """
    n = cloud.size
    if not 1 <= k <= n:
        raise InvalidArgumentError(f"fps_sample needs 1 <= k <= {n}, got k={k}")
    if not 0 <= start < n:
        raise InvalidArgumentError(f"fps_sample start index {start} outside [0, {n})")

    pts = cloud.points
    selected = np.empty(k, dtype=np.int64)
    selected[0] = start
    min_d = np.sum((pts - pts[start]) ** 2, axis=1)
    min_d[start] = -np.inf
    for i in range(1, k):
        nxt = int(np.argmax(min_d))
        selected[i] = nxt
        min_d = np.minimum(min_d, np.sum((pts - pts[nxt]) ** 2, axis=1))
        min_d[nxt] = -np.inf
    return selected.tolist()


def ball_query(
    cloud: PointCloud, centers: Sequence[int], radius: float, cap: int
) -> list[list[int]]:
    """Group neighbours within ``radius`` of each center.

    Lists are nearest-first with ties by lowest index; the center itself is
    always first, even when duplicates of it exist at distance zero.

    Args:
        cloud: Cloud that holds both centers and candidates
        centers: Center indices into ``cloud``
        radius: Inclusive search radius (> 0)
        cap: Maximum list length (>= 1)

    Returns:
        One index list per center
    """
    if radius <= 0:
        raise InvalidArgumentError(f"ball_query radius must be > 0, got {radius}")
    if cap < 1:
        raise InvalidArgumentError(f"ball_query cap must be >= 1, got {cap}")
    centers = [int(c) for c in centers]
    if not centers:
        return []
    for c in centers:
        if not 0 <= c < cloud.size:
            raise InvalidArgumentError(f"ball_query center {c} outside [0, {cloud.size})")

    pts = cloud.points
    tree = cKDTree(pts)
    hits = tree.query_ball_point(pts[centers], r=radius)
    groups = []
    for center, found in zip(centers, hits):
        others = np.array([i for i in found if i != center], dtype=np.int64)
        if others.size:
            d2 = np.sum((pts[others] - pts[center]) ** 2, axis=1)
            others = others[np.lexsort((others, d2))]
        groups.append([center] + others[: cap - 1].tolist())
    return groups


def _nearest_sq(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    _, idx = cKDTree(dst).query(src, k=1)
    return np.sum((src - dst[idx]) ** 2, axis=1)


def chamfer_distance(a: PointCloud, b: PointCloud) -> float:
    """Symmetric Chamfer distance with squared distances and per-set means.

    The squared distances are recomputed from the KD-tree's neighbour indices
    so the value agrees with the brute-force form to rounding.
    """
    return float(_nearest_sq(a.points, b.points).mean() + _nearest_sq(b.points, a.points).mean())


def chamfer_distance_bruteforce(a: PointCloud, b: PointCloud) -> float:
    """O(N·M) reference for ``chamfer_distance``."""
    diff = a.points[:, None, :] - b.points[None, :, :]
    d2 = np.sum(diff**2, axis=2)
    return float(d2.min(axis=1).mean() + d2.min(axis=0).mean())


def rotation_matrix(pitch_deg: float, yaw_deg: float) -> np.ndarray:
    """``R_yaw(y-axis) @ R_pitch(x-axis)``."""
    p = np.deg2rad(pitch_deg)
    y = np.deg2rad(yaw_deg)
    r_pitch = np.array(
        [[1.0, 0.0, 0.0], [0.0, np.cos(p), -np.sin(p)], [0.0, np.sin(p), np.cos(p)]]
    )
    r_yaw = np.array(
        [[np.cos(y), 0.0, np.sin(y)], [0.0, 1.0, 0.0], [-np.sin(y), 0.0, np.cos(y)]]
    )
    return r_yaw @ r_pitch


def rotate_cloud(cloud: PointCloud, pitch_deg: float, yaw_deg: float) -> PointCloud:
    """Rotate about the centroid by pitch (x-axis) then yaw (y-axis)."""
    rot = rotation_matrix(pitch_deg, yaw_deg)
    c = cloud.centroid()
    return cloud.with_points((cloud.points - c) @ rot.T + c)


def augment(
    cloud: PointCloud,
    mode: Literal["dropout", "scale"],
    rng_seed: int,
    *,
    dropout_rate: float = MAX_DROPOUT_RATE,
    scale_range: tuple[float, float] = SCALE_BOUNDS,
) -> PointCloud:
    """Random dropout or random scale.

    Dropout draws an effective rate uniformly in ``[0, dropout_rate)`` and
    overwrites dropped points with the first surviving point, so N is kept.
    The canonical flag is cleared once any point is replaced. Scale draws one
    factor in ``scale_range`` and applies it to centroid-relative coordinates.

    Args:
        cloud: Input cloud
        mode: "dropout" or "scale"
        rng_seed: Seed; equal seeds give bit-identical output
        dropout_rate: Upper bound of the drawn rate, within [0, 0.875]
        scale_range: (low, high) inside [0.8, 1.25]

    Returns:
        Augmented cloud

    Raises:
        InvalidArgumentError: Unknown mode or out-of-range parameters
    """
    rng = np.random.default_rng(rng_seed)
    if mode == "dropout":
        if not 0.0 <= dropout_rate <= MAX_DROPOUT_RATE:
            raise InvalidArgumentError(
                f"dropout rate must lie in [0, {MAX_DROPOUT_RATE}], got {dropout_rate}"
            )
        rate = rng.random() * dropout_rate
        dropped = rng.random(cloud.size) < rate
        if dropped.all():
            dropped[0] = False
        if not dropped.any():
            return cloud
        pts = cloud.points.copy()
        pts[dropped] = pts[int(np.flatnonzero(~dropped)[0])]
        return PointCloud(pts, canonical=False)

    if mode == "scale":
        low, high = scale_range
        if not (SCALE_BOUNDS[0] <= low <= high <= SCALE_BOUNDS[1]):
            raise InvalidArgumentError(
                f"scale range must satisfy {SCALE_BOUNDS[0]} <= low <= high <= "
                f"{SCALE_BOUNDS[1]}, got ({low}, {high})"
            )
        factor = low if low == high else rng.uniform(low, high)
        if factor == 1.0:
            return cloud
        c = cloud.centroid()
        return cloud.with_points(c + (cloud.points - c) * factor)

    raise InvalidArgumentError(f"Unknown augmentation mode: {mode!r}")


def refill_to_size(cloud: PointCloud, n: int) -> PointCloud:
    """Bring ``cloud`` to exactly ``n`` points.

    Larger clouds are thinned by FPS from index 0; smaller ones repeat their
    FPS order cyclically.
    """
    if n < 1:
        raise InvalidArgumentError(f"refill size must be >= 1, got {n}")
    if cloud.size >= n:
        return cloud.subset(fps_sample(cloud, n, 0))
    order = np.asarray(fps_sample(cloud, cloud.size, 0))
    return cloud.subset(order[np.arange(n) % cloud.size])
