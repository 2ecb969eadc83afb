"""Labelled face samples, mean-face tables and subject-independent folds."""

from __future__ import annotations

from collections import defaultdict
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

from ..errors import IncompleteDataError, InvalidArgumentError
from ..geometry.cloud import PointCloud

NUM_EXPRESSIONS = 6
NEUTRAL = 6
EXPRESSION_NAMES = ("anger", "disgust", "fear", "happiness", "sadness", "surprise", "neutral")


@dataclass(frozen=True, eq=False)
class FaceSample:
    """A canonical face cloud with its labels.

    Expression ids 0-5 are the classified expressions; id 6 (neutral) only
    appears in mean-face computation.
    """

    cloud: PointCloud
    expression: int
    identity: int
    intensity: float = 1.0
    pose: tuple[float, float] = (0.0, 0.0)
    sample_id: str = ""

    def __post_init__(self):
        if not 0 <= self.expression <= NEUTRAL:
            raise InvalidArgumentError(f"expression id {self.expression} outside 0..{NEUTRAL}")
        if not 0.0 <= self.intensity <= 1.0:
            raise InvalidArgumentError(f"intensity {self.intensity} outside [0, 1]")
        object.__setattr__(self, "pose", (float(self.pose[0]), float(self.pose[1])))
        if not self.sample_id:
            object.__setattr__(
                self,
                "sample_id",
                f"s{self.identity:03d}_e{self.expression}_i{int(round(self.intensity * 100)):03d}",
            )

    @property
    def is_neutral(self) -> bool:
        return self.expression == NEUTRAL


@dataclass(frozen=True)
class MeanFaceTable:
    """Reconstruction targets built from canonical clouds.

    Attributes:
        per_expression: expression id -> index-wise mean face of that class
        per_identity_neutral: subject id -> that subject's neutral face
        mean_neutral: index-wise mean of all subject neutrals
    """

    per_expression: Mapping[int, PointCloud]
    per_identity_neutral: Mapping[int, PointCloud]
    mean_neutral: PointCloud
    expressions: tuple[int, ...] = field(default=tuple(range(NUM_EXPRESSIONS)))

    @property
    def size(self) -> int:
        return self.mean_neutral.size

    def expression_face(self, expression: int) -> PointCloud:
        try:
            return self.per_expression[expression]
        except KeyError:
            raise IncompleteDataError(f"No mean face for expression {expression}") from None

    def neutral_face(self, subject: int) -> PointCloud:
        try:
            return self.per_identity_neutral[subject]
        except KeyError:
            raise IncompleteDataError(f"No neutral face for subject {subject}") from None

    def is_complete(self) -> bool:
        return all(e in self.per_expression for e in self.expressions)


def _check_canonical(samples: Iterable[FaceSample]) -> int:
    size = None
    for s in samples:
        if not s.cloud.canonical:
            raise InvalidArgumentError(f"Sample {s.sample_id} is not canonical")
        if size is None:
            size = s.cloud.size
        elif s.cloud.size != size:
            raise InvalidArgumentError(
                f"Sample {s.sample_id} has {s.cloud.size} points, expected {size}"
            )
    return size or 0


def _mean_cloud(clouds: Sequence[PointCloud]) -> PointCloud:
    return PointCloud(np.mean(np.stack([c.points for c in clouds]), axis=0), canonical=True)


def compute_mean_faces(
    samples: Sequence[FaceSample],
    neutrals: Sequence[FaceSample],
    expressions: Sequence[int] = tuple(range(NUM_EXPRESSIONS)),
) -> MeanFaceTable:
    """Index-wise mean faces.

    Args:
        samples: Expressive samples (ids 0-5)
        neutrals: Neutral scans, at least one for every subject in ``samples``
        expressions: Classes that must be present

    Returns:
        Complete MeanFaceTable

    Raises:
        IncompleteDataError: A class or a subject neutral is missing
        InvalidArgumentError: Non-canonical clouds or mixed sizes
    """
    size = _check_canonical(list(samples) + list(neutrals))

    by_expression: dict[int, list[PointCloud]] = defaultdict(list)
    for s in samples:
        by_expression[s.expression].append(s.cloud)
    missing = [e for e in expressions if not by_expression.get(e)]
    if missing:
        raise IncompleteDataError(f"Missing expression classes: {missing}")

    by_subject: dict[int, list[PointCloud]] = defaultdict(list)
    for n in neutrals:
        by_subject[n.identity].append(n.cloud)
    lacking = sorted({s.identity for s in samples} - set(by_subject))
    if lacking:
        raise IncompleteDataError(f"Subjects without a neutral scan: {lacking}")
    if not by_subject:
        raise IncompleteDataError("No neutral scans supplied")

    per_identity = {p: _mean_cloud(clouds) for p, clouds in sorted(by_subject.items())}
    mean_neutral = _mean_cloud(list(per_identity.values()))
    per_expression = {e: _mean_cloud(by_expression[e]) for e in expressions}
    if mean_neutral.size != size:
        raise InvalidArgumentError("Mean-face size mismatch")
    return MeanFaceTable(per_expression, per_identity, mean_neutral, tuple(expressions))


def make_folds(subject_ids: Iterable[int], folds: int, seed: int) -> dict[int, int]:
    """Assign every subject to one fold.

    Subjects are shuffled with the seed and dealt round-robin, so fold sizes
    differ by at most one.

    Raises:
        InvalidArgumentError: folds < 2 or folds > number of subjects
    """
    subjects = sorted(set(int(s) for s in subject_ids))
    if folds < 2:
        raise InvalidArgumentError(f"Need at least 2 folds, got {folds}")
    if folds > len(subjects):
        raise InvalidArgumentError(f"{folds} folds requested for {len(subjects)} subjects")
    order = np.random.default_rng(seed).permutation(len(subjects))
    return {subjects[i]: pos % folds for pos, i in enumerate(order)}


def fold_subjects(assignment: Mapping[int, int], fold: int) -> list[int]:
    return sorted(s for s, f in assignment.items() if f == fold)


def split_by_subjects(samples: Iterable[FaceSample], subjects: Iterable[int]) -> list[FaceSample]:
    wanted = set(subjects)
    return [s for s in samples if s.identity in wanted]


def subject_ids(samples: Iterable[FaceSample]) -> list[int]:
    return sorted({s.identity for s in samples})
