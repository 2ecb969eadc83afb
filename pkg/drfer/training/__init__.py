"""Staged training of the DrFER model."""

from .batching import (
    Batch,
    MeanFaceBank,
    TrainingData,
    build_training_data,
    iterate_batches,
    make_batch,
    stack_clouds,
    steps_per_epoch,
)
from .trainer import (
    EpochRecord,
    StageReport,
    Trainer,
    run_baseline,
    run_stage1,
    run_stage2,
    run_stage3,
)

__all__ = [
    "Batch",
    "MeanFaceBank",
    "TrainingData",
    "build_training_data",
    "iterate_batches",
    "make_batch",
    "stack_clouds",
    "steps_per_epoch",
    "EpochRecord",
    "StageReport",
    "Trainer",
    "run_baseline",
    "run_stage1",
    "run_stage2",
    "run_stage3",
]
