"""Versioned checkpoint archives with stage tags and content-hash ids."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import torch

from ..config_schema import NetworkConfig
from ..errors import CheckpointError, StageOrderError
from ..utils.artifacts import canonical_json
from ..utils.logger import get_logger
from .model import DrFERModel

logger = get_logger(__name__)

CHECKPOINT_FORMAT = "drfer-checkpoint"
CHECKPOINT_VERSION = 1
STAGE_TAGS = ("init", "stage1", "stage2", "stage3")


def checkpoint_id(state_dict: dict[str, torch.Tensor], network: dict[str, Any], stage: str) -> str:
    """sha256 over parameter bytes (sorted by name), the network config and the tag."""
    h = hashlib.sha256()
    for name in sorted(state_dict):
        tensor = state_dict[name].detach().cpu().contiguous()
        h.update(name.encode("utf-8"))
        h.update(f"{tensor.dtype}{tuple(tensor.shape)}".encode("utf-8"))
        h.update(tensor.numpy().tobytes())
    h.update(canonical_json(network).encode("utf-8"))
    h.update(stage.encode("utf-8"))
    return h.hexdigest()


def required_predecessor(stage: str) -> str:
    """Tag a runner for ``stage`` must be loaded from."""
    if stage not in STAGE_TAGS or stage == "init":
        raise StageOrderError(f"No runner exists for stage tag '{stage}'")
    return STAGE_TAGS[STAGE_TAGS.index(stage) - 1]


def check_stage_order(loaded: str, runner: str) -> None:
    """Refuse loading a checkpoint that is not the direct predecessor of ``runner``."""
    expected = required_predecessor(runner)
    if loaded != expected:
        direction = "regression" if STAGE_TAGS.index(loaded) >= STAGE_TAGS.index(runner) else "skip"
        raise StageOrderError(
            f"Stage {direction}: the {runner} runner needs a {expected} checkpoint, got {loaded}"
        )


@dataclass
class Checkpoint:
    model: DrFERModel
    stage: str
    checkpoint_id: str
    identity_labels: list[int] = field(default_factory=list)
    test_subjects: list[int] = field(default_factory=list)
    path: Path | None = None


def save_checkpoint(
    model: DrFERModel,
    path: str | Path,
    stage: str,
    identity_labels: list[int] | None = None,
    test_subjects: list[int] | None = None,
) -> str:
    """Save ``model`` tagged with ``stage``.

    Args:
        model: Model to save
        path: Target file
        stage: One of ``STAGE_TAGS``
        identity_labels: Subject id for each identity-head class
        test_subjects: Subjects held out from this model's training

    Returns:
        The checkpoint id
    """
    if stage not in STAGE_TAGS:
        raise CheckpointError(f"Unknown stage tag '{stage}', expected one of {STAGE_TAGS}")
    path = Path(path)
    network = model.config.model_dump(mode="json")
    state = {k: v.detach().cpu().clone() for k, v in model.state_dict().items()}
    ck_id = checkpoint_id(state, network, stage)
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "stage": stage,
        "network": network,
        "num_identities": model.num_identities,
        "identity_labels": list(identity_labels or []),
        "test_subjects": list(test_subjects or []),
        "state_dict": state,
        "checkpoint_id": ck_id,
    }
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        torch.save(payload, path)
    except OSError as e:
        raise CheckpointError(f"Cannot write checkpoint {path}: {e}") from e
    logger.info(f"Saved {stage} checkpoint {ck_id[:12]} to {path}")
    return ck_id


def _config_diff(a: dict[str, Any], b: dict[str, Any], prefix: str = "") -> list[str]:
    diffs = []
    for key in sorted(set(a) | set(b)):
        va, vb = a.get(key), b.get(key)
        name = f"{prefix}{key}"
        if isinstance(va, dict) and isinstance(vb, dict):
            diffs.extend(_config_diff(va, vb, name + "."))
        elif va != vb:
            diffs.append(f"{name}: checkpoint={va!r} config={vb!r}")
    return diffs


def load_checkpoint(
    path: str | Path,
    network: NetworkConfig | None = None,
    runner_stage: str | None = None,
) -> Checkpoint:
    """Load a checkpoint.

    Args:
        path: Checkpoint file
        network: When given, the stored network config must match it
        runner_stage: When given, the stored tag must be this stage's predecessor

    Raises:
        CheckpointError: Missing/unreadable file, wrong format, config mismatch,
            or a content hash that does not match the stored id
        StageOrderError: Tag regression or skip
    """
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"Checkpoint not found: {path}")
    try:
        payload = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as e:
        raise CheckpointError(f"Cannot read checkpoint {path}: {e}") from e
    if not isinstance(payload, dict) or payload.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path} is not a drfer checkpoint")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {payload.get('version')}")

    stage = payload["stage"]
    stored = payload["network"]
    if network is not None:
        diffs = _config_diff(stored, network.model_dump(mode="json"))
        if diffs:
            raise CheckpointError(
                f"Checkpoint {path} was saved with a different network config: " + "; ".join(diffs)
            )
    if runner_stage is not None:
        check_stage_order(stage, runner_stage)

    state = payload["state_dict"]
    if checkpoint_id(state, stored, stage) != payload["checkpoint_id"]:
        raise CheckpointError(f"Checkpoint {path} content does not match its id")

    model = DrFERModel(NetworkConfig.model_validate(stored), int(payload["num_identities"]))
    try:
        model.load_state_dict(state)
    except RuntimeError as e:
        raise CheckpointError(f"Checkpoint {path} does not fit the model: {e}") from e
    model.eval()
    logger.info(f"Loaded {stage} checkpoint {payload['checkpoint_id'][:12]} from {path}")
    return Checkpoint(
        model=model,
        stage=stage,
        checkpoint_id=payload["checkpoint_id"],
        identity_labels=list(payload["identity_labels"]),
        test_subjects=list(payload["test_subjects"]),
        path=path,
    )
