"""Report bundle: results JSON, a text summary and three plots."""

from __future__ import annotations

from collections.abc import Mapping, Sequence
from pathlib import Path
from typing import Any

import numpy as np

from ..data.samples import EXPRESSION_NAMES, NUM_EXPRESSIONS
from ..errors import ReportWriteError
from ..types import AblationRowDict, ProbeDict, ResultsPayload, RotationEntryDict
from ..utils.artifacts import write_json
from ..utils.logger import get_logger

logger = get_logger(__name__)

RESULTS_JSON = "results.json"
SUMMARY_TXT = "summary.txt"
ROTATION_PNG = "rotation_curve.png"
CONFUSION_PNG = "confusion_matrix.png"
EMBEDDING_PNG = "embedding.png"
REPORT_FILES = (RESULTS_JSON, SUMMARY_TXT, ROTATION_PNG, CONFUSION_PNG, EMBEDDING_PNG)


def build_results(
    protocol: str,
    seed: int,
    folds: Sequence[Mapping[str, Any]] = (),
    accuracy_mean: float | None = None,
    accuracy_std: float | None = None,
    confusion: Sequence[Sequence[int]] | None = None,
    rotation_curve: Sequence[RotationEntryDict] | None = None,
    probes: ProbeDict | None = None,
    ablations: Sequence[AblationRowDict] | None = None,
) -> ResultsPayload:
    return {
        "protocol": protocol,
        "seed": seed,
        "folds": [dict(f) for f in folds],
        "accuracy_mean": accuracy_mean,
        "accuracy_std": accuracy_std,
        "confusion": [list(map(int, row)) for row in confusion] if confusion is not None else None,
        "rotation_curve": list(rotation_curve) if rotation_curve is not None else None,
        "probes": probes,
        "ablations": list(ablations) if ablations is not None else None,
    }


def _pct(value: float | None) -> str:
    return "   n/a" if value is None else f"{100.0 * value:6.2f}"


def format_summary(results: Mapping[str, Any]) -> str:
    """Plain-text tables for ``summary.txt``."""
    lines = [f"Protocol: {results.get('protocol', 'n/a')}    seed: {results.get('seed')}", ""]

    if results.get("accuracy_mean") is not None:
        lines.append(
            f"Expression accuracy: {_pct(results['accuracy_mean'])} % "
            f"(+/- {_pct(results.get('accuracy_std') or 0.0).strip()})"
        )
        folds = results.get("folds") or []
        if folds:
            lines.append("")
            lines.append(f"{'repeat':>6} {'fold':>4} {'test':>5} {'stage1':>7} {'final':>7}")
            for f in folds:
                lines.append(
                    f"{f.get('repeat', 0):>6} {f.get('fold', 0):>4} {f.get('test_size', 0):>5} "
                    f"{_pct(f.get('stage1_accuracy')):>7} {_pct(f.get('accuracy')):>7}"
                )
        lines.append("")

    confusion = results.get("confusion")
    if confusion:
        names = [n[:4] for n in EXPRESSION_NAMES[:NUM_EXPRESSIONS]]
        lines.append("Confusion (rows = true, cols = predicted)")
        lines.append("      " + " ".join(f"{n:>5}" for n in names))
        for name, row in zip(names, confusion):
            lines.append(f"{name:>5} " + " ".join(f"{int(v):>5}" for v in row))
        lines.append("")

    curve = results.get("rotation_curve")
    if curve:
        lines.append("Rotation robustness")
        lines.append(f"{'axis':>7} {'angle':>6} {'acc %':>7} {'median pts':>10} {'undef':>5}")
        for e in curve:
            lines.append(
                f"{e['axis']:>7} {e['angle']:>+6.0f} {_pct(e['accuracy']):>7} "
                f"{e['retained_median']:>10.0f} {e['undefined']:>5}"
            )
        lines.append("")

    probes = results.get("probes")
    if probes:
        lines.append("Linear probes on the expression feature")
        lines.append(f"{'':>12} {'final':>7} {'baseline':>9} {'chance':>7}")
        for label, key in (("expression", "expression"), ("identity", "identity")):
            lines.append(
                f"{label:>12} {_pct(probes[f'{key}_from_exp_final']):>7} "
                f"{_pct(probes[f'{key}_from_exp_baseline']):>9} {_pct(probes[f'{key}_chance']):>7}"
            )
        lines.append(f"note: {probes.get('note', '')}")
        lines.append("")

    ablations = results.get("ablations")
    if ablations:
        width = max(len(r["configuration"]) for r in ablations)
        lines.append("Ablations")
        lines.append(f"{'configuration':<{width}}  {'acc %':>7}  {'std':>6}")
        for r in ablations:
            lines.append(
                f"{r['configuration']:<{width}}  {_pct(r['accuracy_mean']):>7}  "
                f"{_pct(r['accuracy_std']).strip():>6}"
            )
        lines.append("")
    return "\n".join(lines).rstrip() + "\n"


def _placeholder(ax, message: str) -> None:
    ax.text(0.5, 0.5, message, ha="center", va="center", transform=ax.transAxes)
    ax.set_xticks([])
    ax.set_yticks([])


def plot_rotation_curve(curve: Sequence[RotationEntryDict] | None, path: Path) -> None:
    from matplotlib.figure import Figure

    fig = Figure(figsize=(6, 4))
    ax = fig.subplots()
    if not curve:
        _placeholder(ax, "no rotation benchmark")
    else:
        frontal = [e for e in curve if e["angle"] == 0.0]
        for axis, marker in (("pitch", "o"), ("yaw", "s")):
            pts = sorted(
                [(e["angle"], e["accuracy"]) for e in curve if e["axis"] == axis]
                + [(0.0, e["accuracy"]) for e in frontal]
            )
            pts = [(a, acc) for a, acc in pts if acc is not None]
            if pts:
                xs, ys = zip(*pts)
                ax.plot(xs, [100.0 * y for y in ys], marker=marker, label=axis)
        ax.set_xlabel("rotation (deg)")
        ax.set_ylabel("accuracy (%)")
        ax.set_ylim(0, 100)
        ax.legend()
        ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=100)


def plot_confusion(confusion: Sequence[Sequence[int]] | None, path: Path) -> None:
    from matplotlib.figure import Figure

    fig = Figure(figsize=(5, 4.5))
    ax = fig.subplots()
    if not confusion:
        _placeholder(ax, "no confusion matrix")
    else:
        cm = np.asarray(confusion, dtype=float)
        rows = cm.sum(axis=1, keepdims=True)
        norm = np.divide(cm, rows, out=np.zeros_like(cm), where=rows > 0)
        im = ax.imshow(norm, vmin=0.0, vmax=1.0, cmap="Blues")
        names = list(EXPRESSION_NAMES[: cm.shape[0]])
        ax.set_xticks(range(len(names)), names, rotation=45, ha="right")
        ax.set_yticks(range(len(names)), names)
        for i in range(cm.shape[0]):
            for j in range(cm.shape[1]):
                ax.text(j, i, f"{100 * norm[i, j]:.0f}", ha="center", va="center", fontsize=8)
        ax.set_xlabel("predicted")
        ax.set_ylabel("true")
        fig.colorbar(im, ax=ax)
    fig.tight_layout()
    fig.savefig(path, dpi=100)


def plot_embedding(embedding: Mapping[str, Any] | None, path: Path) -> None:
    from matplotlib.figure import Figure

    fig = Figure(figsize=(5, 5))
    ax = fig.subplots()
    coords = np.asarray(embedding.get("coordinates", []) if embedding else [])
    if coords.size == 0:
        _placeholder(ax, "no embedding")
    else:
        labels = np.asarray(embedding["expressions"])
        for e in sorted(set(labels.tolist())):
            sel = labels == e
            ax.scatter(coords[sel, 0], coords[sel, 1], s=12, label=EXPRESSION_NAMES[e])
        ax.set_title(f"expression features ({embedding.get('method', 'linear')})")
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=100)


def emit_report(
    results: Mapping[str, Any],
    out_dir: str | Path,
    embedding: Mapping[str, Any] | None = None,
) -> dict[str, Path]:
    """Write the report bundle (exactly ``REPORT_FILES``).

    Args:
        results: ``ResultsPayload``-shaped dict
        out_dir: Target directory
        embedding: ``Embedding.to_dict()`` output, if any

    Returns:
        File name -> path

    Raises:
        ReportWriteError: The directory cannot be created or written
    """
    out_dir = Path(out_dir)
    paths = {name: out_dir / name for name in REPORT_FILES}
    write_json(paths[RESULTS_JSON], dict(results))
    try:
        paths[SUMMARY_TXT].write_text(format_summary(results), encoding="utf-8")
        plot_rotation_curve(results.get("rotation_curve"), paths[ROTATION_PNG])
        plot_confusion(results.get("confusion"), paths[CONFUSION_PNG])
        plot_embedding(embedding, paths[EMBEDDING_PNG])
    except OSError as e:
        raise ReportWriteError(f"Cannot write report to {out_dir}: {e}") from e
    logger.info(f"Report written to {out_dir}")
    return paths
