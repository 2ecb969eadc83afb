"""Linear probes on frozen expression features, and 2-D embeddings.

The identity probe measures how much subject identity is still readable from
the expression feature: the lower it is after disentanglement training
relative to the stage-one baseline, the less identity leaks into it.
"""

from __future__ import annotations

from collections import defaultdict
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Protocol

import numpy as np
import torch
import torch.nn as nn
from sklearn.decomposition import PCA
from sklearn.linear_model import LogisticRegression
from sklearn.manifold import TSNE
from sklearn.pipeline import make_pipeline
from sklearn.preprocessing import StandardScaler

from ..config_schema import ProjectionMethod
from ..data.samples import FaceSample, subject_ids
from ..errors import InvalidArgumentError, ReportWriteError
from ..training.batching import stack_clouds
from ..types import ProbeDict
from ..utils.artifacts import write_json
from ..utils.logger import get_logger

logger = get_logger(__name__)

PROBE_NOTE = (
    "identity_from_exp_* is a linear-probe measure of identity leakage into the "
    "expression feature; lower is better"
)


class FeatureModel(Protocol):
    def expression_features(self, points: torch.Tensor) -> torch.Tensor: ...


@torch.no_grad()
def extract_features(
    model: FeatureModel, samples: Sequence[FaceSample], batch_size: int = 32
) -> np.ndarray:
    """Expression features ``[n, 1024]`` in eval mode."""
    was_training = isinstance(model, nn.Module) and model.training
    if isinstance(model, nn.Module):
        model.eval()
    chunks = []
    for start in range(0, len(samples), batch_size):
        points = stack_clouds([s.cloud for s in samples[start : start + batch_size]])
        chunks.append(model.expression_features(points).double().cpu().numpy())
    if was_training:
        model.train()
    return np.concatenate(chunks)


def probe_split(samples: Sequence[FaceSample]) -> tuple[np.ndarray, np.ndarray]:
    """Alternate the samples of every (subject, expression) between train and test.

    Both probes then see every subject and every expression on both sides.
    """
    groups: dict[tuple[int, int], list[int]] = defaultdict(list)
    for i, s in enumerate(samples):
        groups[(s.identity, s.expression)].append(i)
    train, test = [], []
    for key in sorted(groups):
        members = sorted(groups[key], key=lambda i: (samples[i].intensity, samples[i].sample_id))
        train += members[0::2]
        test += members[1::2]
    return np.array(sorted(train)), np.array(sorted(test))


def linear_probe(
    features: np.ndarray,
    labels: np.ndarray,
    train_idx: np.ndarray,
    test_idx: np.ndarray,
    seed: int = 0,
) -> float:
    """Test accuracy of a standardised logistic-regression probe."""
    if len(np.unique(labels[train_idx])) < 2:
        raise InvalidArgumentError("A linear probe needs at least 2 classes in its training split")
    probe = make_pipeline(StandardScaler(), LogisticRegression(max_iter=2000, random_state=seed))
    probe.fit(features[train_idx], labels[train_idx])
    return float(probe.score(features[test_idx], labels[test_idx]))


@dataclass
class ProbeReport:
    expression_from_exp_final: float
    identity_from_exp_final: float
    expression_from_exp_baseline: float | None
    identity_from_exp_baseline: float | None
    expression_chance: float
    identity_chance: float
    train_size: int
    test_size: int
    note: str = PROBE_NOTE

    def to_dict(self) -> ProbeDict:
        return {
            "expression_from_exp_final": self.expression_from_exp_final,
            "identity_from_exp_final": self.identity_from_exp_final,
            "expression_from_exp_baseline": self.expression_from_exp_baseline,
            "identity_from_exp_baseline": self.identity_from_exp_baseline,
            "expression_chance": self.expression_chance,
            "identity_chance": self.identity_chance,
            "train_size": self.train_size,
            "test_size": self.test_size,
            "note": self.note,
        }


def probe_features(
    features: np.ndarray, samples: Sequence[FaceSample], seed: int = 0
) -> tuple[float, float]:
    """(expression accuracy, identity accuracy) of probes on precomputed features."""
    train_idx, test_idx = probe_split(samples)
    if len(test_idx) == 0:
        raise InvalidArgumentError("Probes need at least 2 samples per (subject, expression)")
    expressions = np.array([s.expression for s in samples])
    identities = np.array([s.identity for s in samples])
    return (
        linear_probe(features, expressions, train_idx, test_idx, seed),
        linear_probe(features, identities, train_idx, test_idx, seed),
    )


def disentanglement_probe(
    model: FeatureModel,
    samples: Sequence[FaceSample],
    baseline: FeatureModel | None = None,
    batch_size: int = 32,
    seed: int = 0,
) -> ProbeReport:
    """Expression and identity probes on the final (and baseline) expression features.

    Raises:
        InvalidArgumentError: Fewer than 2 subjects, or too few samples to split
    """
    subjects = subject_ids(samples)
    if len(subjects) < 2:
        raise InvalidArgumentError(f"Probes need at least 2 subjects, got {len(subjects)}")
    train_idx, test_idx = probe_split(samples)
    features = extract_features(model, samples, batch_size)
    exp_final, id_final = probe_features(features, samples, seed)
    exp_base = id_base = None
    if baseline is not None:
        exp_base, id_base = probe_features(
            extract_features(baseline, samples, batch_size), samples, seed
        )
    report = ProbeReport(
        expression_from_exp_final=exp_final,
        identity_from_exp_final=id_final,
        expression_from_exp_baseline=exp_base,
        identity_from_exp_baseline=id_base,
        expression_chance=1.0 / len({s.expression for s in samples}),
        identity_chance=1.0 / len(subjects),
        train_size=len(train_idx),
        test_size=len(test_idx),
    )
    logger.info(
        f"Probes: expression {exp_final:.3f}, identity {id_final:.3f}"
        + (f" (baseline {exp_base:.3f} / {id_base:.3f})" if baseline is not None else "")
    )
    return report


def mean_probe_report(reports: Sequence[ProbeReport]) -> ProbeReport | None:
    """Field-wise mean over folds; baseline fields stay None unless every fold has them."""
    if not reports:
        return None

    def avg(name: str) -> float | None:
        values = [getattr(r, name) for r in reports]
        return None if any(v is None for v in values) else float(np.mean(values))

    return ProbeReport(
        expression_from_exp_final=avg("expression_from_exp_final"),
        identity_from_exp_final=avg("identity_from_exp_final"),
        expression_from_exp_baseline=avg("expression_from_exp_baseline"),
        identity_from_exp_baseline=avg("identity_from_exp_baseline"),
        expression_chance=avg("expression_chance"),
        identity_chance=avg("identity_chance"),
        train_size=sum(r.train_size for r in reports),
        test_size=sum(r.test_size for r in reports),
    )


def project_features(
    features: np.ndarray,
    method: ProjectionMethod | str = ProjectionMethod.LINEAR,
    seed: int = 0,
    perplexity: float = 30.0,
) -> np.ndarray:
    """2-D coordinates: top-2 principal directions, or t-SNE when asked."""
    method = ProjectionMethod(method)
    features = np.asarray(features, dtype=np.float64)
    n, d = features.shape
    if n < 2:
        return np.zeros((n, 2))
    if method is ProjectionMethod.TSNE:
        tsne = TSNE(
            n_components=2,
            init="pca",
            random_state=seed,
            perplexity=min(perplexity, n - 1.0),
        )
        return tsne.fit_transform(features)
    k = min(2, n, d)
    coords = PCA(n_components=k, svd_solver="full").fit_transform(features)
    if k < 2:
        coords = np.hstack([coords, np.zeros((n, 2 - k))])
    return coords


@dataclass
class Embedding:
    method: str
    coordinates: np.ndarray
    features: np.ndarray
    expressions: list[int]
    identities: list[int]
    sample_ids: list[str]

    def to_dict(self) -> dict[str, Any]:
        return {
            "method": self.method,
            "coordinates": self.coordinates.tolist(),
            "expressions": list(self.expressions),
            "identities": list(self.identities),
            "sample_ids": list(self.sample_ids),
        }


def embed_features(
    model: FeatureModel,
    samples: Sequence[FaceSample],
    method: ProjectionMethod | str = ProjectionMethod.LINEAR,
    seed: int = 0,
    perplexity: float = 30.0,
    batch_size: int = 32,
) -> Embedding:
    features = extract_features(model, samples, batch_size) if samples else np.zeros((0, 1024))
    coords = project_features(features, method, seed, perplexity)
    return Embedding(
        method=ProjectionMethod(method).value,
        coordinates=coords,
        features=features,
        expressions=[s.expression for s in samples],
        identities=[s.identity for s in samples],
        sample_ids=[s.sample_id for s in samples],
    )


EMBEDDING_JSON = "embedding.json"
FEATURES_NPY = "features.npy"


def write_embedding(embedding: Embedding, out_dir: str | Path) -> list[Path]:
    """Write ``embedding.json`` (coordinates + labels) and ``features.npy``."""
    out_dir = Path(out_dir)
    json_path = write_json(out_dir / EMBEDDING_JSON, embedding.to_dict())
    npy_path = out_dir / FEATURES_NPY
    try:
        np.save(npy_path, embedding.features)
    except OSError as e:
        raise ReportWriteError(f"Cannot write {npy_path}: {e}") from e
    return [json_path, npy_path]
