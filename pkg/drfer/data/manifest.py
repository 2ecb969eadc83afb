"""Dataset manifests, the mean-face cache and the scan preparation pipeline.

A dataset directory holds ``manifest.json``, one DRF1 file per cloud under
``clouds/`` and cached mean faces under ``meanfaces/<hash>/``. The manifest's
``content_hash`` covers the labels and the bytes of every referenced cloud, so
a regenerated dataset with identical content reuses the cache.
"""

from __future__ import annotations

import hashlib
import json
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import DatasetLoadError, InvalidArgumentError
from ..geometry.cloud import PointCloud, read_cloud, read_drf, write_drf, write_xyz
from ..geometry.kernels import fps_sample, rotation_matrix
from ..geometry.registration import canonical_resample, rigid_register
from ..types import DatasetManifest, ManifestEntry, RawManifest, RawScanEntry
from ..utils.artifacts import file_digest, write_json
from ..utils.logger import get_logger
from .samples import NEUTRAL, NUM_EXPRESSIONS, FaceSample, MeanFaceTable, compute_mean_faces
from .synth import SynthDataset

logger = get_logger(__name__)

MANIFEST_FORMAT = "drfer-dataset"
RAW_FORMAT = "drfer-raw"
MANIFEST_VERSION = 1
MANIFEST_NAME = "manifest.json"
CACHE_DIR = "meanfaces"


@dataclass(frozen=True)
class LoadedDataset:
    samples: list[FaceSample]
    neutrals: list[FaceSample]
    mean_faces: MeanFaceTable
    content_hash: str
    cache_hit: bool
    manifest_path: Path

    @property
    def points(self) -> int:
        return self.mean_faces.size


def _entry(sample: FaceSample, cloud_file: str) -> ManifestEntry:
    return {
        "cloud_file": cloud_file,
        "expression": int(sample.expression),
        "identity": int(sample.identity),
        "intensity": float(sample.intensity),
        "pose": [float(sample.pose[0]), float(sample.pose[1])],
        "sample_id": sample.sample_id,
    }


def _content_hash(
    samples: Sequence[ManifestEntry], neutrals: Sequence[ManifestEntry], root: Path
) -> str:
    h = hashlib.sha256()
    for group, entries in (("samples", samples), ("neutrals", neutrals)):
        h.update(group.encode())
        for entry in entries:
            labels = {k: v for k, v in entry.items() if k != "cloud_file"}
            h.update(json.dumps(labels, sort_keys=True).encode())
            h.update(file_digest(root / entry["cloud_file"]).encode())
    return h.hexdigest()


def write_dataset(
    samples: Sequence[FaceSample], neutrals: Sequence[FaceSample], out_dir: str | Path
) -> Path:
    """Write clouds and ``manifest.json``.

    Returns:
        Path of the manifest
    """
    out_dir = Path(out_dir)
    sample_entries, neutral_entries = [], []
    seen: set[str] = set()
    for group, entries in ((samples, sample_entries), (neutrals, neutral_entries)):
        for s in group:
            name = s.sample_id
            if name in seen:
                raise InvalidArgumentError(f"Duplicate sample id {name}")
            seen.add(name)
            rel = f"clouds/{name}.drf"
            write_drf(s.cloud, out_dir / rel)
            entries.append(_entry(s, rel))

    points = samples[0].cloud.size if samples else (neutrals[0].cloud.size if neutrals else 0)
    manifest: DatasetManifest = {
        "format": MANIFEST_FORMAT,
        "version": MANIFEST_VERSION,
        "content_hash": _content_hash(sample_entries, neutral_entries, out_dir),
        "points": points,
        "samples": sample_entries,
        "neutrals": neutral_entries,
    }
    path = write_json(out_dir / MANIFEST_NAME, manifest)
    logger.info(f"Wrote dataset manifest {path} ({len(sample_entries)} samples)")
    return path


def _read_manifest(path: Path) -> dict:
    try:
        with open(path, encoding="utf-8") as f:
            data = json.load(f)
    except FileNotFoundError as e:
        raise DatasetLoadError("Manifest not found", str(path)) from e
    except (OSError, json.JSONDecodeError) as e:
        raise DatasetLoadError(f"Cannot parse manifest: {e}", str(path)) from e
    if not isinstance(data, dict):
        raise DatasetLoadError("Manifest must be a JSON object", str(path))
    return data


def _load_entry(entry: dict, root: Path, neutral: bool, points: int | None) -> FaceSample:
    cloud_file = str(entry.get("cloud_file", ""))
    where = str(root / cloud_file) if cloud_file else str(root)
    try:
        expression = int(entry["expression"])
        identity = int(entry["identity"])
        intensity = float(entry.get("intensity", 1.0))
        pose = entry.get("pose", [0.0, 0.0])
    except (KeyError, TypeError, ValueError) as e:
        raise DatasetLoadError(f"Malformed manifest entry: {e}", where) from e

    if neutral and expression != NEUTRAL:
        raise DatasetLoadError(
            f"Neutral entry has expression {expression}, expected {NEUTRAL}", where
        )
    if not neutral and not 0 <= expression < NUM_EXPRESSIONS:
        raise DatasetLoadError(
            f"Expression label {expression} out of range 0..{NUM_EXPRESSIONS - 1}", where
        )
    if identity < 0:
        raise DatasetLoadError(f"Identity label {identity} must be >= 0", where)

    cloud = read_drf(root / cloud_file)
    if not cloud.canonical:
        raise DatasetLoadError("Cloud is not canonical", where)
    if points is not None and cloud.size != points:
        raise DatasetLoadError(f"Cloud has {cloud.size} points, expected {points}", where)
    try:
        return FaceSample(
            cloud, expression, identity, intensity, tuple(pose), str(entry.get("sample_id", ""))
        )
    except InvalidArgumentError as e:
        raise DatasetLoadError(str(e), where) from e


def _storage_round(cloud: PointCloud) -> PointCloud:
    """Round to float32 like a DRF1 round trip, so cached and fresh tables agree."""
    return PointCloud(cloud.points.astype(np.float32).astype(np.float64), canonical=True)


def _rounded(table: MeanFaceTable) -> MeanFaceTable:
    return MeanFaceTable(
        {e: _storage_round(c) for e, c in table.per_expression.items()},
        {p: _storage_round(c) for p, c in table.per_identity_neutral.items()},
        _storage_round(table.mean_neutral),
        table.expressions,
    )


def _cache_paths(cache: Path, expressions: list[int], subjects: list[int]) -> list[Path]:
    return (
        [cache / f"expression_{e}.drf" for e in expressions]
        + [cache / f"neutral_{p}.drf" for p in subjects]
        + [cache / "mean_neutral.drf"]
    )


def _load_cache(cache: Path, subjects: list[int]) -> MeanFaceTable | None:
    expressions = list(range(NUM_EXPRESSIONS))
    paths = _cache_paths(cache, expressions, subjects)
    if not all(p.exists() for p in paths):
        return None
    try:
        per_expression = {e: read_drf(cache / f"expression_{e}.drf") for e in expressions}
        per_identity = {p: read_drf(cache / f"neutral_{p}.drf") for p in subjects}
        mean_neutral = read_drf(cache / "mean_neutral.drf")
    except DatasetLoadError as e:
        logger.warning(f"Ignoring unreadable mean-face cache: {e}")
        return None
    return MeanFaceTable(per_expression, per_identity, mean_neutral)


def _store_cache(cache: Path, table: MeanFaceTable) -> None:
    for e, cloud in table.per_expression.items():
        write_drf(cloud, cache / f"expression_{e}.drf")
    for p, cloud in table.per_identity_neutral.items():
        write_drf(cloud, cache / f"neutral_{p}.drf")
    write_drf(table.mean_neutral, cache / "mean_neutral.drf")


def load_dataset(
    manifest_path: str | Path, use_cache: bool = True, cache_root: str | Path | None = None
) -> LoadedDataset:
    """Load and validate a dataset manifest.

    Args:
        manifest_path: Path to ``manifest.json``
        use_cache: Read and write the mean-face cache
        cache_root: Directory holding ``meanfaces/``; defaults to the manifest directory

    Returns:
        LoadedDataset with samples, neutrals and a complete mean-face table

    Raises:
        DatasetLoadError: Bad labels, missing files, mixed sizes (message names the file)
        IncompleteDataError: A class or subject neutral is missing
    """
    path = Path(manifest_path)
    data = _read_manifest(path)
    if data.get("format") != MANIFEST_FORMAT:
        raise DatasetLoadError(f"Unknown manifest format {data.get('format')!r}", str(path))
    root = path.parent

    raw_samples = data.get("samples") or []
    raw_neutrals = data.get("neutrals") or []
    if not raw_samples:
        raise DatasetLoadError("Manifest lists no samples", str(path))

    declared = data.get("points")
    points = int(declared) if declared else None
    samples, neutrals = [], []
    for entry in raw_samples:
        sample = _load_entry(entry, root, neutral=False, points=points)
        points = points or sample.cloud.size
        samples.append(sample)
    for entry in raw_neutrals:
        neutrals.append(_load_entry(entry, root, neutral=True, points=points))

    digest = _content_hash(raw_samples, raw_neutrals, root)
    if data.get("content_hash") and data["content_hash"] != digest:
        logger.warning(f"Manifest header hash is stale for {path}; using recomputed hash")

    cache = Path(cache_root or root) / CACHE_DIR / digest[:16]
    subjects = sorted({n.identity for n in neutrals})
    table = _load_cache(cache, subjects) if use_cache else None
    cache_hit = table is not None
    if table is None:
        table = _rounded(compute_mean_faces(samples, neutrals))
        if use_cache:
            _store_cache(cache, table)
    logger.info(
        f"Loaded {len(samples)} samples, {len(neutrals)} neutrals from {path} "
        f"(mean-face cache {'hit' if cache_hit else 'miss'})"
    )
    return LoadedDataset(samples, neutrals, table, digest, cache_hit, path)


def _raw_entry(sample: FaceSample, scan_file: str) -> RawScanEntry:
    entry = _entry(sample, scan_file)
    return {
        "scan_file": scan_file,
        "expression": entry["expression"],
        "identity": entry["identity"],
        "intensity": entry["intensity"],
        "pose": entry["pose"],
        "sample_id": entry["sample_id"],
    }


def write_raw_scans(
    dataset: SynthDataset,
    template: PointCloud,
    out_dir: str | Path,
    seed: int,
    max_rotation_deg: float = 8.0,
    max_translation_mm: float = 15.0,
) -> Path:
    """Emit unregistered ASCII-XYZ scans for the preparation pipeline.

    Every cloud gets a random rigid pose and shuffled row order.

    Returns:
        Path of the raw manifest
    """
    out_dir = Path(out_dir)
    rng = np.random.default_rng(seed)
    write_drf(template, out_dir / "template.drf")
    groups: dict[str, list[RawScanEntry]] = {"samples": [], "neutrals": []}
    for key, members in (("samples", dataset.samples), ("neutrals", dataset.neutrals)):
        for s in members:
            pitch, yaw = rng.uniform(-max_rotation_deg, max_rotation_deg, size=2)
            shift = rng.uniform(-max_translation_mm, max_translation_mm, size=3)
            pts = s.cloud.points @ rotation_matrix(pitch, yaw).T + shift
            pts = pts[rng.permutation(len(pts))]
            rel = f"raw/{s.sample_id}.xyz"
            write_xyz(PointCloud(pts), out_dir / rel)
            groups[key].append(_raw_entry(s, rel))
    manifest: RawManifest = {
        "format": RAW_FORMAT,
        "version": MANIFEST_VERSION,
        "template": "template.drf",
        "samples": groups["samples"],
        "neutrals": groups["neutrals"],
    }
    return write_json(out_dir / "raw_manifest.json", manifest)


def prepare_dataset(
    raw_manifest_path: str | Path,
    out_dir: str | Path,
    input_points: int,
    template_path: str | Path | None = None,
    max_iters: int = 50,
    tol: float = 1e-8,
) -> Path:
    """Register, canonically resample and thin raw scans into a dataset.

    Each scan is aligned to the template with ICP, resampled to template
    indices, then reduced to ``input_points`` with one template-anchored FPS
    index set shared by every scan.

    Returns:
        Path of the written dataset manifest
    """
    raw_path = Path(raw_manifest_path)
    data = _read_manifest(raw_path)
    if data.get("format") != RAW_FORMAT:
        raise DatasetLoadError(f"Unknown raw manifest format {data.get('format')!r}", str(raw_path))
    root = raw_path.parent
    tpl_file = Path(template_path) if template_path else root / str(data.get("template", ""))
    template = read_cloud(tpl_file)
    if input_points > template.size:
        raise InvalidArgumentError(
            f"input_points={input_points} exceeds template size {template.size}"
        )
    order = fps_sample(template, input_points, 0)

    def _prepare(entry: dict) -> FaceSample:
        where = str(root / str(entry.get("scan_file", "")))
        scan = read_cloud(where)
        transform, residual = rigid_register(scan, template, max_iters=max_iters, tol=tol)
        resampled = canonical_resample(transform.apply(scan), template)
        logger.debug(f"Registered {where}: residual {residual:.3f} mm")
        try:
            return FaceSample(
                resampled.subset(order, canonical=True),
                int(entry["expression"]),
                int(entry["identity"]),
                float(entry.get("intensity", 1.0)),
                tuple(entry.get("pose", [0.0, 0.0])),
                str(entry.get("sample_id", "")),
            )
        except (KeyError, ValueError) as e:
            raise DatasetLoadError(f"Malformed raw entry: {e}", where) from e

    samples = [_prepare(e) for e in data.get("samples") or []]
    neutrals = [_prepare(e) for e in data.get("neutrals") or []]
    logger.info(f"Prepared {len(samples) + len(neutrals)} scans against {tpl_file}")
    return write_dataset(samples, neutrals, out_dir)
