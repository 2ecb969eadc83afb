"""Robustness to head pose with self-occlusion.

Each test face is rotated about its centroid (pitch about x, yaw about y),
points hidden from a camera on the +z axis are removed, and the visible part
is refilled to the network's input size by repeating FPS-ordered points.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from ..data.samples import FaceSample
from ..errors import InvalidArgumentError
from ..geometry.cloud import PointCloud
from ..geometry.kernels import refill_to_size, rotate_cloud
from ..geometry.visibility import (
    DEFAULT_GAMMA,
    DEFAULT_VIEW_FACTOR,
    default_viewpoint,
    remove_hidden_points,
)
from ..types import RotationEntryDict
from ..utils.logger import get_logger
from .metrics import ExpressionModel, predict

logger = get_logger(__name__)

AXES = ("pitch", "yaw")
DEFAULT_ANGLES = (20.0, 40.0, 60.0, 80.0)
MIN_VISIBLE = 3


def parse_angles(angles: str | Sequence[float] | None) -> list[float]:
    """``"default"``/None, a comma list like ``"20,40"`` or numbers -> magnitudes.

    Raises:
        InvalidArgumentError: Unparseable or outside (0, 90]
    """
    if angles is None or (isinstance(angles, str) and angles.strip().lower() == "default"):
        return list(DEFAULT_ANGLES)
    if isinstance(angles, str):
        try:
            values = [float(v) for v in angles.split(",") if v.strip()]
        except ValueError:
            raise InvalidArgumentError(f"Cannot parse angles '{angles}'") from None
    else:
        values = [float(v) for v in angles]
    values = sorted({abs(v) for v in values if v != 0.0})
    if not values or any(v > 90.0 for v in values):
        raise InvalidArgumentError(f"Angles must be non-empty magnitudes in (0, 90], got {angles}")
    return values


def rotation_poses(angles: Sequence[float]) -> list[tuple[str, float]]:
    """Frontal pose plus +/- each angle about each axis (17 poses for 4 angles)."""
    poses = [("frontal", 0.0)]
    for axis in AXES:
        for a in angles:
            poses += [(axis, -float(a)), (axis, float(a))]
    return poses


def occlude(
    cloud: PointCloud,
    axis: str,
    angle: float,
    gamma: float = DEFAULT_GAMMA,
    viewpoint_factor: float = DEFAULT_VIEW_FACTOR,
) -> tuple[PointCloud, int]:
    """Rotate and keep the visible points. Returns (visible cloud, retained count)."""
    pitch, yaw = (angle, 0.0) if axis == "pitch" else (0.0, angle)
    rotated = rotate_cloud(cloud, pitch, yaw) if angle else cloud
    visible = remove_hidden_points(rotated, default_viewpoint(rotated, viewpoint_factor), gamma)
    return rotated.subset(visible), len(visible)


@dataclass
class RotationEntry:
    axis: str
    angle: float
    accuracy: float | None
    retained: list[int] = field(default_factory=list)
    evaluated: int = 0
    undefined: int = 0

    def to_dict(self) -> RotationEntryDict:
        counts = np.asarray(self.retained or [0])
        return {
            "axis": self.axis,
            "angle": self.angle,
            "accuracy": self.accuracy,
            "retained_median": float(np.median(counts)),
            "retained_min": int(counts.min()),
            "retained_max": int(counts.max()),
            "evaluated": self.evaluated,
            "undefined": self.undefined,
        }


@dataclass
class RotationCurve:
    entries: list[RotationEntry]

    def entry(self, axis: str, angle: float) -> RotationEntry:
        for e in self.entries:
            if e.angle == angle and (e.axis == axis or angle == 0.0):
                return e
        raise KeyError((axis, angle))

    def to_dict(self) -> list[RotationEntryDict]:
        return [e.to_dict() for e in self.entries]


def rotation_benchmark(
    model: ExpressionModel,
    samples: Sequence[FaceSample],
    angles: Sequence[float] = DEFAULT_ANGLES,
    input_points: int | None = None,
    gamma: float = DEFAULT_GAMMA,
    viewpoint_factor: float = DEFAULT_VIEW_FACTOR,
    batch_size: int = 32,
) -> RotationCurve:
    """Accuracy per pose plus retained-point counts.

    The frontal entry classifies the unmodified clouds, so it equals
    ``evaluate``; its retained counts still come from the visibility operator.
    A pose that leaves fewer than 3 visible points marks that sample undefined
    and excludes it.

    Raises:
        InvalidArgumentError: No samples
    """
    if not samples:
        raise InvalidArgumentError("rotation_benchmark needs at least one sample")
    n = input_points or samples[0].cloud.size
    labels = np.array([s.expression for s in samples])
    entries = []
    for axis, angle in rotation_poses(angles):
        clouds, kept, retained = [], [], []
        for i, s in enumerate(samples):
            visible, count = occlude(s.cloud, axis, angle, gamma, viewpoint_factor)
            retained.append(count)
            if count < MIN_VISIBLE and angle != 0.0:
                continue
            clouds.append(s.cloud if angle == 0.0 else refill_to_size(visible, n))
            kept.append(i)
        accuracy = None
        if clouds:
            preds = predict(model, clouds, batch_size)
            accuracy = float(np.mean(preds == labels[kept]))
        entry = RotationEntry(
            axis=axis,
            angle=angle,
            accuracy=accuracy,
            retained=retained,
            evaluated=len(kept),
            undefined=len(samples) - len(kept),
        )
        if entry.undefined:
            logger.warning(f"{axis} {angle:+.0f}: {entry.undefined} samples left < 3 points")
        shown = "n/a" if accuracy is None else f"{accuracy:.3f}"
        logger.info(
            f"{axis} {angle:+.0f} deg: acc {shown}, median retained {np.median(retained):.0f}"
        )
        entries.append(entry)
    return RotationCurve(entries)
