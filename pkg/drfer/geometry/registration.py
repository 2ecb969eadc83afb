"""Rigid registration and canonical resampling.

Raw scans are aligned to a template with point-to-point ICP and then resampled
so that row i of every output is the scan point nearest to template row i.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

from ..errors import DegenerateGeometryError
from ..utils.logger import get_logger
from .cloud import PointCloud, RigidTransform

logger = get_logger(__name__)


def _affine_rank(points: np.ndarray) -> int:
    """Rank of the homogeneous ``[p, 1]`` matrix: 1 point, 2 line, 3 plane, 4 volume."""
    homo = np.hstack([points, np.ones((points.shape[0], 1))])
    scale = max(1.0, float(np.abs(points).max()))
    return int(np.linalg.matrix_rank(homo, tol=1e-9 * scale * max(homo.shape)))


def kabsch(source: np.ndarray, target: np.ndarray) -> RigidTransform:
    """Least-squares rigid fit of paired rows ``source[i] -> target[i]``.

    The SVD solution is det-corrected so the result is a proper rotation.
    """
    cs = source.mean(axis=0)
    ct = target.mean(axis=0)
    u, _, vt = np.linalg.svd((source - cs).T @ (target - ct))
    d = np.sign(np.linalg.det(vt.T @ u.T)) or 1.0
    rot = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    return RigidTransform(rot, ct - rot @ cs)


def rigid_register(
    source: PointCloud,
    template: PointCloud,
    max_iters: int = 50,
    tol: float = 1e-10,
    trace: list[float] | None = None,
) -> tuple[RigidTransform, float]:
    """Align ``source`` to ``template`` with point-to-point ICP.

    Starts from the centroid-aligning translation. Each iteration refits the
    full transform from the original source to the current nearest-neighbour
    correspondences; a step that would raise the residual is rejected, so the
    residual sequence never increases.

    Args:
        source: Cloud to move
        template: Fixed target cloud
        max_iters: Iteration cap
        tol: Stop once the residual improves by less than this
        trace: When given, receives the residual after the start and after each accepted step

    Returns:
        (transform mapping source into the template frame, final RMS nearest distance)

    Raises:
        DegenerateGeometryError: Either cloud is collinear or has fewer than 3 distinct points
    """
    src = source.points
    dst = template.points
    if _affine_rank(src) < 3:
        raise DegenerateGeometryError(
            f"Registration source is degenerate ({source.size} points, collinear or coincident)"
        )
    if _affine_rank(dst) < 3:
        raise DegenerateGeometryError("Registration template is collinear or coincident")

    tree = cKDTree(dst)
    current = RigidTransform(np.eye(3), dst.mean(axis=0) - src.mean(axis=0))
    _, idx = tree.query(current.apply(src), k=1)
    residual = float(np.sqrt(np.mean(np.sum((current.apply(src) - dst[idx]) ** 2, axis=1))))
    if trace is not None:
        trace.append(residual)

    for it in range(max_iters):
        candidate = kabsch(src, dst[idx])
        moved = candidate.apply(src)
        _, new_idx = tree.query(moved, k=1)
        new_residual = float(np.sqrt(np.mean(np.sum((moved - dst[new_idx]) ** 2, axis=1))))
        if new_residual > residual:
            logger.debug(f"ICP step {it} rejected: {new_residual:.3e} > {residual:.3e}")
            break
        improvement = residual - new_residual
        current, residual, idx = candidate, new_residual, new_idx
        if trace is not None:
            trace.append(residual)
        if improvement < tol:
            break

    logger.debug(f"ICP finished with residual {residual:.6g} mm")
    return current, residual


def canonical_resample(cloud: PointCloud, template: PointCloud) -> PointCloud:
    """Output row i is the ``cloud`` point nearest to template row i.

    ``cloud`` must already be in the template frame.
    """
    _, idx = cKDTree(cloud.points).query(template.points, k=1)
    return PointCloud(cloud.points[np.asarray(idx, dtype=np.int64)], canonical=True)
