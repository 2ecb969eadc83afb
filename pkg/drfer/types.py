"""Type definitions for JSON payloads written and read by drfer.

TypedDicts describe file boundaries; in-memory results are dataclasses with
``to_dict`` methods producing these shapes.
"""

from typing import Any, TypedDict


class ManifestEntry(TypedDict):
    """One cloud in a dataset manifest."""
    cloud_file: str
    expression: int
    identity: int
    intensity: float
    pose: list[float]
    sample_id: str


class DatasetManifest(TypedDict):
    """Dataset manifest (``manifest.json``)."""
    format: str
    version: int
    content_hash: str
    points: int
    samples: list[ManifestEntry]
    neutrals: list[ManifestEntry]


class RawScanEntry(TypedDict):
    """One raw, unregistered scan in a raw-scan manifest."""
    scan_file: str
    expression: int
    identity: int
    intensity: float
    pose: list[float]
    sample_id: str


class RawManifest(TypedDict):
    format: str
    version: int
    template: str
    samples: list[RawScanEntry]
    neutrals: list[RawScanEntry]


class RunManifest(TypedDict):
    """``run_manifest.json`` written by every CLI invocation."""
    command: str
    status: str  # "complete" or "incomplete"
    seed: int
    config: dict[str, Any]
    artifacts: dict[str, str]
    error: str | None


class RotationEntryDict(TypedDict):
    axis: str
    angle: float
    accuracy: float | None
    retained_median: float
    retained_min: int
    retained_max: int
    evaluated: int
    undefined: int


class ProbeDict(TypedDict):
    expression_from_exp_final: float
    identity_from_exp_final: float
    expression_from_exp_baseline: float | None
    identity_from_exp_baseline: float | None
    expression_chance: float
    identity_chance: float
    train_size: int
    test_size: int
    note: str


class AblationRowDict(TypedDict):
    configuration: str
    accuracy_mean: float
    accuracy_std: float
    per_fold: list[float]


class ResultsPayload(TypedDict, total=False):
    """``results.json`` emitted by the report step."""
    protocol: str
    seed: int
    folds: list[dict[str, Any]]
    accuracy_mean: float | None
    accuracy_std: float | None
    confusion: list[list[int]] | None
    rotation_curve: list[RotationEntryDict] | None
    probes: ProbeDict | None
    ablations: list[AblationRowDict] | None
