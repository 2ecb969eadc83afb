"""Console summary tables."""

from collections.abc import Mapping, Sequence
from typing import Any

from colorama import Fore, Style

from .logger import _ensure_colorama_initialized


def _pct(value: float | None) -> str:
    return "n/a" if value is None else f"{100.0 * value:.2f}%"


def print_eval_summary_table(
    results: Mapping[str, Mapping[str, Any]], chance: float | None = 1.0 / 6.0
) -> None:
    """Print accuracy per evaluated configuration.

    Args:
        results: Row name -> ``EvalResult.to_dict()``
        chance: Accuracy at or below which a row is shown in red
    """
    _ensure_colorama_initialized()
    print("\n" + "=" * 80)
    print(f"{'Evaluation':<40} {'Accuracy':<12} {'Std':<10} {'Folds':<8} {'Samples':<8}")
    print("=" * 80)
    for name, r in results.items():
        acc = r.get("accuracy")
        color = Fore.GREEN
        if acc is None or (chance is not None and acc <= chance):
            color = Fore.RED
        folds = len(r.get("per_fold", []))
        samples = sum(r.get("fold_sizes", []))
        print(
            f"{color}{name:<40} {_pct(acc):<12} {_pct(r.get('accuracy_std')):<10} "
            f"{folds:<8} {samples:<8}{Style.RESET_ALL}"
        )
    print("=" * 80 + "\n")


def print_rotation_table(curve: Sequence[Mapping[str, Any]]) -> None:
    """Print the pose table of a rotation benchmark."""
    _ensure_colorama_initialized()
    frontal = next((e["accuracy"] for e in curve if e["angle"] == 0.0), None)
    print("\n" + "=" * 80)
    print(f"{'Pose':<20} {'Accuracy':<12} {'Median points':<16} {'Undefined':<10}")
    print("=" * 80)
    for e in curve:
        pose = "frontal" if e["angle"] == 0.0 else f"{e['axis']} {e['angle']:+.0f}"
        acc = e["accuracy"]
        color = Fore.GREEN
        if acc is None:
            color = Fore.RED
        elif frontal and acc < 0.85 * frontal:
            color = Fore.YELLOW
        print(
            f"{color}{pose:<20} {_pct(acc):<12} {e['retained_median']:<16.0f} "
            f"{e['undefined']:<10}{Style.RESET_ALL}"
        )
    print("=" * 80 + "\n")


def print_stage_reports(reports: Sequence[Mapping[str, Any]]) -> None:
    """Print final loss and accuracy of each trained component."""
    _ensure_colorama_initialized()
    print("\n" + "=" * 80)
    print(f"{'Stage / component':<30} {'Epochs':<8} {'Loss':<12} {'Train acc':<12} {'Val acc':<10}")
    print("=" * 80)
    for r in reports:
        epochs = r.get("epochs", [])
        last = epochs[-1] if epochs else {}
        loss = f"{last['total']:.4f}" if last else "n/a"
        print(
            f"{r['stage'] + ' / ' + r['component']:<30} {len(epochs):<8} {loss:<12} "
            f"{_pct(last.get('train_accuracy')):<12} {_pct(last.get('val_accuracy')):<10}"
        )
    print("=" * 80 + "\n")
