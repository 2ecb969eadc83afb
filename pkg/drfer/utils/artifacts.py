"""Run directories, content digests and run manifests.

Every CLI run records which files it produced and a digest of each. Digests
of JSON artifacts are taken over the canonical JSON with volatile keys
(wall-clock timings) removed, so two identical runs give identical manifests.
"""

from __future__ import annotations

import hashlib
import json
import os
from collections.abc import Iterable, Mapping
from pathlib import Path
from typing import Any

from ..errors import ReportWriteError
from ..types import RunManifest
from .logger import get_logger

logger = get_logger(__name__)

VOLATILE_KEYS = frozenset({"wall_seconds", "created_at", "elapsed_seconds"})
RUN_MANIFEST = "run_manifest.json"


def strip_volatile(obj: Any, volatile: Iterable[str] = VOLATILE_KEYS) -> Any:
    """Copy of ``obj`` without volatile keys at any depth."""
    volatile = frozenset(volatile)
    if isinstance(obj, Mapping):
        return {k: strip_volatile(v, volatile) for k, v in obj.items() if k not in volatile}
    if isinstance(obj, (list, tuple)):
        return [strip_volatile(v, volatile) for v in obj]
    return obj


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=True)


def json_digest(obj: Any) -> str:
    return hashlib.sha256(canonical_json(strip_volatile(obj)).encode("utf-8")).hexdigest()


def file_digest(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_json(path: str | Path, payload: Any) -> Path:
    """Write pretty JSON atomically (temp file then rename).

    Raises:
        ReportWriteError: The directory is not writable
    """
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        os.replace(tmp, path)
    except OSError as e:
        raise ReportWriteError(f"Cannot write {path}: {e.strerror or e}") from e
    return path


def read_json(path: str | Path) -> Any:
    with open(path, encoding="utf-8") as f:
        return json.load(f)


class RunRecorder:
    """Context manager that writes ``run_manifest.json`` on exit.

    The manifest's status is ``complete`` when the block exits normally and
    ``incomplete`` (with the error message) otherwise. Exceptions propagate.

    Example:
        with RunRecorder(out, "train", seed, config_summary) as run:
            run.record_json("reports/stage1.json", path, payload)
    """

    def __init__(self, out_dir: str | Path, command: str, seed: int, config: Mapping[str, Any]):
        self.out_dir = Path(out_dir)
        self.command = command
        self.seed = seed
        self.config = dict(config)
        self.artifacts: dict[str, str] = {}

    def __enter__(self) -> RunRecorder:
        try:
            self.out_dir.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise ReportWriteError(f"Cannot create output directory {self.out_dir}: {e}") from e
        return self

    def _name(self, path: str | Path) -> str:
        path = Path(path)
        try:
            return path.resolve().relative_to(self.out_dir.resolve()).as_posix()
        except ValueError:
            return path.as_posix()

    def record(self, path: str | Path, digest: str | None = None) -> None:
        """Record a file; its digest defaults to the file's sha256."""
        self.artifacts[self._name(path)] = digest or file_digest(path)

    def record_json(self, path: str | Path, payload: Any) -> None:
        self.artifacts[self._name(path)] = json_digest(payload)

    def manifest(self, status: str, error: str | None = None) -> RunManifest:
        return {
            "command": self.command,
            "status": status,
            "seed": self.seed,
            "config": self.config,
            "artifacts": dict(sorted(self.artifacts.items())),
            "error": error,
        }

    def __exit__(self, exc_type, exc, tb) -> bool:
        if exc is None:
            write_json(self.out_dir / RUN_MANIFEST, self.manifest("complete"))
        else:
            logger.error(f"Run '{self.command}' failed: {exc}")
            try:
                write_json(self.out_dir / RUN_MANIFEST, self.manifest("incomplete", str(exc)))
            except ReportWriteError:
                logger.error("Could not mark the run as incomplete")
        return False
