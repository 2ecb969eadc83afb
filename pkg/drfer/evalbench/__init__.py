"""Evaluation: accuracy, cross-validation, rotation robustness, probes and reports."""

from .crossval import (
    ABLATION_ROWS,
    AblationRow,
    CrossValResult,
    FoldOutcome,
    assert_no_leakage,
    cross_validate,
    run_ablation,
    run_fold,
)
from .metrics import EvalResult, ExpressionModel, aggregate_results, evaluate, predict
from .probes import (
    Embedding,
    ProbeReport,
    disentanglement_probe,
    embed_features,
    project_features,
    write_embedding,
)
from .report import REPORT_FILES, build_results, emit_report
from .rotation import RotationCurve, RotationEntry, parse_angles, rotation_benchmark

__all__ = [
    "ABLATION_ROWS",
    "AblationRow",
    "CrossValResult",
    "FoldOutcome",
    "assert_no_leakage",
    "cross_validate",
    "run_ablation",
    "run_fold",
    "EvalResult",
    "ExpressionModel",
    "aggregate_results",
    "evaluate",
    "predict",
    "Embedding",
    "ProbeReport",
    "disentanglement_probe",
    "embed_features",
    "project_features",
    "write_embedding",
    "REPORT_FILES",
    "build_results",
    "emit_report",
    "RotationCurve",
    "RotationEntry",
    "parse_angles",
    "rotation_benchmark",
]
