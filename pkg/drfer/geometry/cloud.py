"""Point-cloud value types and their file formats.

``PointCloud`` holds an N×3 float64 array in millimetres. Clouds marked
``canonical`` share index semantics: row i of every canonical cloud in a
dataset is the same template location.

Files:
    DRF1 binary: b"DRF1", u32 point count, u8 canonical flag, N×3 little-endian float32.
    ASCII XYZ: one "x y z" row per point.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import DatasetLoadError, InvalidArgumentError

DRF_MAGIC = b"DRF1"
_HEADER = struct.Struct("<4sIB")
ORTHONORMAL_TOL = 1e-9


def _as_points(points) -> np.ndarray:
    arr = np.array(points, dtype=np.float64, copy=True)
    if arr.ndim == 1 and arr.size == 3:
        arr = arr.reshape(1, 3)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise InvalidArgumentError(f"Point array must be N×3, got shape {arr.shape}")
    if arr.shape[0] < 1:
        raise InvalidArgumentError("Point cloud must contain at least one point")
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError("Point cloud contains non-finite coordinates")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Ordered 3D points in millimetres."""

    points: np.ndarray
    canonical: bool = False

    def __post_init__(self):
        object.__setattr__(self, "points", _as_points(self.points))
        object.__setattr__(self, "canonical", bool(self.canonical))

    @property
    def size(self) -> int:
        return int(self.points.shape[0])

    def __len__(self) -> int:
        return self.size

    def centroid(self) -> np.ndarray:
        return self.points.mean(axis=0)

    def bounding_radius(self) -> float:
        """Largest distance from the centroid."""
        return float(np.linalg.norm(self.points - self.centroid(), axis=1).max())

    def with_points(self, points, canonical: bool | None = None) -> PointCloud:
        return PointCloud(points, self.canonical if canonical is None else canonical)

    def subset(self, indices, canonical: bool = False) -> PointCloud:
        """Rows at ``indices``, in that order."""
        idx = np.asarray(indices, dtype=np.int64)
        return PointCloud(self.points[idx], canonical)

    def allclose(self, other: PointCloud, atol: float = 1e-9) -> bool:
        return self.points.shape == other.points.shape and bool(
            np.allclose(self.points, other.points, rtol=0.0, atol=atol)
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, PointCloud):
            return NotImplemented
        return self.canonical == other.canonical and np.array_equal(self.points, other.points)

    __hash__ = None


def _identity3() -> np.ndarray:
    return np.eye(3)


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """Proper rigid motion ``x -> R x + t``."""

    rotation: np.ndarray = field(default_factory=_identity3)
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        rot = np.array(self.rotation, dtype=np.float64).reshape(3, 3)
        trans = np.array(self.translation, dtype=np.float64).reshape(3)
        if not np.allclose(rot.T @ rot, np.eye(3), rtol=0.0, atol=ORTHONORMAL_TOL):
            raise InvalidArgumentError("Rotation is not orthonormal")
        if np.linalg.det(rot) <= 0:
            raise InvalidArgumentError("Rotation must have determinant +1")
        if not np.all(np.isfinite(trans)):
            raise InvalidArgumentError("Translation contains non-finite values")
        rot.setflags(write=False)
        trans.setflags(write=False)
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", trans)

    @classmethod
    def identity(cls) -> RigidTransform:
        return cls()

    def apply(self, points: np.ndarray | PointCloud) -> np.ndarray | PointCloud:
        if isinstance(points, PointCloud):
            return points.with_points(self.apply(points.points))
        return np.asarray(points, dtype=np.float64) @ self.rotation.T + self.translation

    def inverse(self) -> RigidTransform:
        rot_t = self.rotation.T
        return RigidTransform(rot_t, -rot_t @ self.translation)

    def compose(self, other: RigidTransform) -> RigidTransform:
        """Transform applying ``other`` first, then ``self``."""
        return RigidTransform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def as_matrix(self) -> np.ndarray:
        mat = np.eye(4)
        mat[:3, :3] = self.rotation
        mat[:3, 3] = self.translation
        return mat


def write_drf(cloud: PointCloud, path: str | Path) -> Path:
    """Write ``cloud`` as a DRF1 container.

    Args:
        cloud: Cloud to store (coordinates are narrowed to float32)
        path: Destination file

    Returns:
        The written path
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = _HEADER.pack(DRF_MAGIC, cloud.size, 1 if cloud.canonical else 0)
    body = np.ascontiguousarray(cloud.points, dtype="<f4").tobytes()
    path.write_bytes(header + body)
    return path


def read_drf(path: str | Path) -> PointCloud:
    """Read a DRF1 container.

    Raises:
        DatasetLoadError: Missing file, bad magic or truncated body
    """
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise DatasetLoadError(f"Cannot read cloud file: {e.strerror or e}", str(path)) from e
    if len(raw) < _HEADER.size:
        raise DatasetLoadError("Truncated DRF1 header", str(path))
    magic, count, flag = _HEADER.unpack_from(raw)
    if magic != DRF_MAGIC:
        raise DatasetLoadError(f"Bad magic {magic!r}, expected {DRF_MAGIC!r}", str(path))
    expected = _HEADER.size + count * 12
    if len(raw) != expected:
        raise DatasetLoadError(
            f"DRF1 body size mismatch: header says {count} points, file has {len(raw)} bytes",
            str(path),
        )
    pts = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size, count=count * 3).reshape(count, 3)
    try:
        return PointCloud(pts.astype(np.float64), canonical=bool(flag))
    except InvalidArgumentError as e:
        raise DatasetLoadError(str(e), str(path)) from e


def read_xyz(path: str | Path, canonical: bool = False) -> PointCloud:
    """Import an ASCII XYZ file (one ``x y z`` row per point)."""
    path = Path(path)
    try:
        pts = np.loadtxt(path, dtype=np.float64, ndmin=2, comments="#")
    except (OSError, ValueError) as e:
        raise DatasetLoadError(f"Cannot parse XYZ file: {e}", str(path)) from e
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise DatasetLoadError(f"XYZ rows must have 3 columns, got shape {pts.shape}", str(path))
    try:
        return PointCloud(pts, canonical=canonical)
    except InvalidArgumentError as e:
        raise DatasetLoadError(str(e), str(path)) from e


def write_xyz(cloud: PointCloud, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(path, cloud.points, fmt="%.6f")
    return path


def read_cloud(path: str | Path) -> PointCloud:
    """Read a cloud by extension: ``.drf`` binary, anything else ASCII XYZ."""
    path = Path(path)
    if path.suffix.lower() == ".drf":
        return read_drf(path)
    return read_xyz(path)
