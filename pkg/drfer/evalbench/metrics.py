"""Expression accuracy and confusion matrices."""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import Any, Protocol, runtime_checkable

import numpy as np
import torch
import torch.nn as nn
from sklearn.metrics import confusion_matrix

from ..data.samples import NUM_EXPRESSIONS, FaceSample
from ..errors import InvalidArgumentError
from ..geometry.cloud import PointCloud
from ..training.batching import stack_clouds


@runtime_checkable
class ExpressionModel(Protocol):
    """Anything that maps a ``[B, N, 3]`` batch to ``[B, 6]`` expression logits."""

    def expression_logits(self, points: torch.Tensor) -> torch.Tensor: ...


@dataclass
class EvalResult:
    """Accuracy summary.

    ``accuracy`` is always ``trace(confusion) / confusion.sum()``, which for
    an aggregate equals the test-size-weighted mean of ``per_fold``.
    """

    accuracy: float
    confusion: np.ndarray
    per_fold: list[float] = field(default_factory=list)
    fold_sizes: list[int] = field(default_factory=list)

    @property
    def total(self) -> int:
        return int(self.confusion.sum())

    @property
    def mean(self) -> float:
        return self.accuracy

    @property
    def std(self) -> float:
        return float(np.std(self.per_fold)) if self.per_fold else 0.0

    def to_dict(self) -> dict[str, Any]:
        return {
            "accuracy": self.accuracy,
            "accuracy_mean": self.mean,
            "accuracy_std": self.std,
            "per_fold": list(self.per_fold),
            "fold_sizes": list(self.fold_sizes),
            "confusion": self.confusion.astype(int).tolist(),
        }


@torch.no_grad()
def predict(
    model: ExpressionModel, clouds: Sequence[PointCloud], batch_size: int = 32
) -> np.ndarray:
    """Argmax expression predictions; modules are evaluated in eval mode."""
    was_training = isinstance(model, nn.Module) and model.training
    if isinstance(model, nn.Module):
        model.eval()
    preds = []
    for start in range(0, len(clouds), batch_size):
        logits = model.expression_logits(stack_clouds(clouds[start : start + batch_size]))
        preds.append(logits.argmax(dim=-1).cpu().numpy())
    if was_training:
        model.train()
    return np.concatenate(preds) if preds else np.zeros(0, dtype=np.int64)


def result_from_predictions(
    labels: Sequence[int], predictions: Sequence[int], num_classes: int = NUM_EXPRESSIONS
) -> EvalResult:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size == 0:
        raise InvalidArgumentError("Cannot score an empty sample set")
    cm = confusion_matrix(labels, np.asarray(predictions), labels=list(range(num_classes)))
    accuracy = float(np.trace(cm) / cm.sum())
    return EvalResult(accuracy, cm, [accuracy], [int(cm.sum())])


def evaluate(
    model: ExpressionModel,
    samples: Sequence[FaceSample],
    batch_size: int = 32,
    num_classes: int = NUM_EXPRESSIONS,
) -> EvalResult:
    """Accuracy and confusion of ``model`` on labelled samples.

    Raises:
        InvalidArgumentError: ``samples`` is empty
    """
    if not samples:
        raise InvalidArgumentError("evaluate needs at least one sample")
    preds = predict(model, [s.cloud for s in samples], batch_size)
    return result_from_predictions([s.expression for s in samples], preds, num_classes)


def aggregate_results(results: Sequence[EvalResult]) -> EvalResult:
    """Pool folds: confusions add, per-fold accuracies are kept."""
    if not results:
        raise InvalidArgumentError("Nothing to aggregate")
    cm = np.sum([r.confusion for r in results], axis=0)
    per_fold = [a for r in results for a in r.per_fold]
    sizes = [s for r in results for s in r.fold_sizes]
    return EvalResult(float(np.trace(cm) / cm.sum()), cm, per_fold, sizes)
