"""Seeded batching, input augmentation and tensor assembly."""

from __future__ import annotations

import math
from collections.abc import Iterator, Sequence
from dataclasses import dataclass, field

import numpy as np
import torch

from ..config_schema import AugmentConfig
from ..data.samples import (
    FaceSample,
    MeanFaceTable,
    compute_mean_faces,
    split_by_subjects,
    subject_ids,
)
from ..errors import IncompleteDataError, InvalidArgumentError
from ..geometry.cloud import PointCloud
from ..geometry.kernels import augment


@dataclass
class TrainingData:
    """Everything a trainer may look at.

    Mean faces are built from the training subjects only; identity classes
    are the training subjects in ascending id order.
    """

    train: list[FaceSample]
    val: list[FaceSample]
    neutrals: list[FaceSample]
    mean_faces: MeanFaceTable
    identity_labels: list[int]
    test_subjects: list[int] = field(default_factory=list)

    @property
    def train_subjects(self) -> list[int]:
        return subject_ids(self.train)

    def identity_index(self, subject: int) -> int:
        try:
            return self.identity_labels.index(subject)
        except ValueError:
            return -1


def build_training_data(
    samples: Sequence[FaceSample],
    neutrals: Sequence[FaceSample],
    train_subjects: Sequence[int],
    val_subjects: Sequence[int] = (),
    test_subjects: Sequence[int] = (),
) -> TrainingData:
    """Split by subject and compute train-only mean faces.

    Raises:
        InvalidArgumentError: Overlapping subject groups or no training samples
        IncompleteDataError: A class or a subject neutral is missing on the train side
    """
    groups = [set(train_subjects), set(val_subjects), set(test_subjects)]
    if groups[0] & groups[1] or groups[0] & groups[2] or groups[1] & groups[2]:
        raise InvalidArgumentError("Train, validation and test subjects must be disjoint")
    train = split_by_subjects(samples, train_subjects)
    if not train:
        raise InvalidArgumentError("No training samples for the requested subjects")
    val = split_by_subjects(samples, val_subjects)
    side = sorted(groups[0] | groups[1])
    side_neutrals = split_by_subjects(neutrals, side)
    table = compute_mean_faces(train, split_by_subjects(neutrals, train_subjects))
    return TrainingData(
        train=train,
        val=val,
        neutrals=side_neutrals,
        mean_faces=table,
        identity_labels=subject_ids(train),
        test_subjects=sorted(groups[2]),
    )


def stack_clouds(clouds: Sequence[PointCloud]) -> torch.Tensor:
    return torch.from_numpy(np.stack([c.points for c in clouds]).astype(np.float32))


class MeanFaceBank:
    """Mean-face targets as tensors, indexed by label."""

    def __init__(self, table: MeanFaceTable, neutrals: Sequence[FaceSample] = ()):
        self.expressions = stack_clouds([table.expression_face(e) for e in table.expressions])
        self.mean_neutral = stack_clouds([table.mean_neutral])[0]
        faces = dict(table.per_identity_neutral)
        for n in neutrals:
            faces.setdefault(n.identity, n.cloud)
        self.subjects = sorted(faces)
        self.neutrals = stack_clouds([faces[s] for s in self.subjects])
        self._row = {s: i for i, s in enumerate(self.subjects)}

    def expression_faces(self, expressions: torch.Tensor) -> torch.Tensor:
        return self.expressions[expressions]

    def neutral_faces(self, subjects: Sequence[int]) -> torch.Tensor:
        missing = [s for s in subjects if s not in self._row]
        if missing:
            raise IncompleteDataError(f"No neutral face for subjects {sorted(set(missing))}")
        return self.neutrals[[self._row[s] for s in subjects]]

    def targets(self, batch: Batch) -> dict[str, torch.Tensor]:
        """Reconstruction targets keyed the way ``recon_loss`` expects."""
        return {
            "mean_expression": self.expression_faces(batch.expressions),
            "neutral": self.neutral_faces(batch.subjects),
            "mean_neutral": self.mean_neutral,
            "original": batch.clean,
        }


@dataclass
class Batch:
    points: torch.Tensor  # network input, possibly augmented
    clean: torch.Tensor  # canonical clouds
    expressions: torch.Tensor
    identity_targets: torch.Tensor
    subjects: list[int]
    sample_ids: list[str]

    def __len__(self) -> int:
        return len(self.subjects)


def steps_per_epoch(n_samples: int, batch_size: int) -> int:
    return math.ceil(n_samples / batch_size)


def iterate_batches(
    samples: Sequence[FaceSample], batch_size: int, rng: np.random.Generator | None
) -> Iterator[list[FaceSample]]:
    """Shuffled (or ordered when ``rng`` is None) batches; the last may be short."""
    if batch_size < 1:
        raise InvalidArgumentError(f"batch_size must be >= 1, got {batch_size}")
    order = rng.permutation(len(samples)) if rng is not None else np.arange(len(samples))
    for start in range(0, len(samples), batch_size):
        yield [samples[i] for i in order[start : start + batch_size]]


def augment_clouds(
    clouds: Sequence[PointCloud], rng: np.random.Generator, config: AugmentConfig
) -> list[PointCloud]:
    """Random dropout then random scale, each with its own drawn seed."""
    out = []
    for cloud in clouds:
        seeds = rng.integers(0, 2**31 - 1, size=2)
        cloud = augment(cloud, "dropout", int(seeds[0]), dropout_rate=config.dropout_rate)
        cloud = augment(
            cloud, "scale", int(seeds[1]), scale_range=(config.scale_low, config.scale_high)
        )
        out.append(cloud)
    return out


def make_batch(
    samples: Sequence[FaceSample],
    data: TrainingData,
    rng: np.random.Generator | None = None,
    augment_config: AugmentConfig | None = None,
) -> Batch:
    """Assemble tensors; augmentation touches inputs only, never targets."""
    clouds = [s.cloud for s in samples]
    clean = stack_clouds(clouds)
    if rng is not None and augment_config is not None and augment_config.enabled:
        points = stack_clouds(augment_clouds(clouds, rng, augment_config))
    else:
        points = clean
    return Batch(
        points=points,
        clean=clean,
        expressions=torch.tensor([s.expression for s in samples], dtype=torch.long),
        identity_targets=torch.tensor(
            [data.identity_index(s.identity) for s in samples], dtype=torch.long
        ),
        subjects=[s.identity for s in samples],
        sample_ids=[s.sample_id for s in samples],
    )
