"""Hidden-point removal by spherical flipping.

Points are moved into the viewpoint frame, flipped about a sphere of radius
``gamma * max|p|`` and tested for membership of the convex hull of the flipped
set plus the viewpoint. Hull vertices are the visible points.
"""

from __future__ import annotations

from collections.abc import Sequence

import numpy as np
from scipy.spatial import ConvexHull

from ..errors import InvalidArgumentError
from ..utils.logger import get_logger
from .cloud import PointCloud

logger = get_logger(__name__)

DEFAULT_GAMMA = 3.0
DEFAULT_VIEW_FACTOR = 5.0
_RANK_TOL = 1e-9


def default_viewpoint(cloud: PointCloud, factor: float = DEFAULT_VIEW_FACTOR) -> np.ndarray:
    """Viewpoint on the +z axis through the centroid, ``factor`` bounding radii away."""
    radius = max(cloud.bounding_radius(), 1.0)
    return cloud.centroid() + np.array([0.0, 0.0, factor * radius])


def _hull_vertices(points: np.ndarray) -> np.ndarray:
    """Hull vertex indices, projecting onto the affine span when it is not 3D."""
    centered = points - points.mean(axis=0)
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    if s.size == 0 or s[0] <= 0:
        return np.arange(points.shape[0])
    rank = int(np.sum(s > _RANK_TOL * s[0]))
    coords = centered @ vt[:rank].T
    if rank == 1:
        line = coords[:, 0]
        return np.unique([int(np.argmin(line)), int(np.argmax(line))])
    return np.asarray(ConvexHull(coords).vertices)


def remove_hidden_points(
    cloud: PointCloud, viewpoint: Sequence[float], gamma: float = DEFAULT_GAMMA
) -> list[int]:
    """Indices of the points visible from ``viewpoint``.

    Args:
        cloud: Input cloud
        viewpoint: Camera position; must lie outside the centroid bounding sphere
        gamma: Flip radius multiplier (> 1)

    Returns:
        Ascending visible indices

    Raises:
        InvalidArgumentError: Viewpoint inside the cloud or gamma <= 1
    """
    if gamma <= 1.0:
        raise InvalidArgumentError(f"HPR gamma must be > 1, got {gamma}")
    view = np.asarray(viewpoint, dtype=np.float64).reshape(3)
    center = cloud.centroid()
    if np.linalg.norm(view - center) <= cloud.bounding_radius():
        raise InvalidArgumentError("Viewpoint lies inside the cloud's bounding sphere")
    if cloud.size == 1:
        return [0]

    p = cloud.points - view
    norms = np.linalg.norm(p, axis=1)
    radius = gamma * norms.max()
    flipped = p + 2.0 * (radius - norms)[:, None] * p / norms[:, None]
    hull_input = np.vstack([flipped, np.zeros((1, 3))])

    vertices = _hull_vertices(hull_input)
    visible = sorted(int(v) for v in vertices if v < cloud.size)
    logger.debug(f"HPR kept {len(visible)}/{cloud.size} points")
    return visible
