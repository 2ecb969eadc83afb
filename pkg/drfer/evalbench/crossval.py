"""Subject-independent k-fold cross-validation and the ablation grid.

Every fold trains the full three-stage pipeline from scratch on the training
subjects (one further fold is held out for validation metrics when there are
at least three folds), and scores the expression branch after each stage on
the test subjects. ``eval.repeats`` re-draws the fold assignment with seeds
``seed + r``.
"""

from __future__ import annotations

import copy
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from typing import Any

from ..config_schema import DrferConfig
from ..data.samples import FaceSample, fold_subjects, make_folds, split_by_subjects, subject_ids
from ..errors import FoldLeakageError, InvalidArgumentError
from ..training.batching import build_training_data
from ..training.trainer import StageReport, Trainer
from ..types import AblationRowDict
from ..utils.logger import get_logger
from ..utils.runtime import derive_seed
from .metrics import EvalResult, aggregate_results, evaluate
from .probes import ProbeReport, disentanglement_probe, mean_probe_report

logger = get_logger(__name__)

STAGES = ("stage1", "stage2", "stage3")


def assert_no_leakage(test_subjects: Sequence[int], seen_subjects: set[int], where: str) -> None:
    leaked = sorted(set(test_subjects) & set(seen_subjects))
    if leaked:
        raise FoldLeakageError(f"{where}: test subjects {leaked} appeared in training batches")


@dataclass
class FoldOutcome:
    repeat: int
    fold: int
    train_subjects: list[int]
    val_subjects: list[int]
    test_subjects: list[int]
    results: dict[str, EvalResult]
    probes: ProbeReport | None = None
    reports: list[StageReport] = field(default_factory=list)

    @property
    def final(self) -> EvalResult:
        return self.results[max(self.results)]

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "repeat": self.repeat,
            "fold": self.fold,
            "train_subjects": self.train_subjects,
            "val_subjects": self.val_subjects,
            "test_subjects": self.test_subjects,
            "test_size": self.final.total,
            "accuracy": self.final.accuracy,
        }
        for stage, result in self.results.items():
            out[f"{stage}_accuracy"] = result.accuracy
        if self.probes is not None:
            out["probes"] = self.probes.to_dict()
        return out


@dataclass
class CrossValResult:
    folds: list[FoldOutcome]
    per_stage: dict[str, EvalResult]
    probes: ProbeReport | None = None

    @property
    def final(self) -> EvalResult:
        return self.per_stage[max(self.per_stage)]

    def to_dict(self) -> dict[str, Any]:
        return {
            "folds": [f.to_dict() for f in self.folds],
            "per_stage": {k: v.to_dict() for k, v in self.per_stage.items()},
            "final": self.final.to_dict(),
            "probes": self.probes.to_dict() if self.probes else None,
        }


def run_fold(
    config: DrferConfig,
    samples: Sequence[FaceSample],
    neutrals: Sequence[FaceSample],
    train_subjects: Sequence[int],
    val_subjects: Sequence[int],
    test_subjects: Sequence[int],
    stages: int = 3,
    probes: bool = False,
    where: str = "fold",
) -> tuple[dict[str, EvalResult], ProbeReport | None, list[StageReport]]:
    """Train stages 1..``stages`` on one split and score after each stage."""
    data = build_training_data(samples, neutrals, train_subjects, val_subjects, test_subjects)
    test = split_by_subjects(samples, test_subjects)
    if not test:
        raise InvalidArgumentError(f"{where}: no test samples")
    batch = config.eval.batch_size
    trainer = Trainer(config, data)
    results: dict[str, EvalResult] = {}
    reports: list[StageReport] = []

    reports += trainer.run_stage1()
    assert_no_leakage(test_subjects, trainer.seen_subjects, where)
    results["stage1"] = evaluate(trainer.model, test, batch)
    baseline = copy.deepcopy(trainer.model) if probes and stages == 3 else None
    if stages >= 2:
        reports += trainer.run_stage2()
        assert_no_leakage(test_subjects, trainer.seen_subjects, where)
        results["stage2"] = evaluate(trainer.model, test, batch)
    if stages >= 3:
        reports += trainer.run_stage3()
        assert_no_leakage(test_subjects, trainer.seen_subjects, where)
        results["stage3"] = evaluate(trainer.model, test, batch)

    probe = None
    if probes:
        if len(test_subjects) < 2:
            logger.warning(f"{where}: probes skipped, fewer than 2 test subjects")
        else:
            probe = disentanglement_probe(
                trainer.model, test, baseline, batch, seed=config.train.seed
            )
    stage_summary = ", ".join(f"{k} {v.accuracy:.3f}" for k, v in results.items())
    logger.info(f"{where}: {stage_summary}")
    return results, probe, reports


def cross_validate(
    config: DrferConfig,
    samples: Sequence[FaceSample],
    neutrals: Sequence[FaceSample],
    folds: int | None = None,
    repeats: int | None = None,
    stages: int = 3,
    probes: bool | None = None,
) -> CrossValResult:
    """k-fold cross-validation over subjects.

    Args:
        config: Configuration; ``train.seed`` is the base seed
        samples: Expressive samples
        neutrals: Neutral scans
        folds: Overrides ``eval.folds``
        repeats: Overrides ``eval.repeats``
        stages: Train stages 1..stages per fold
        probes: Overrides ``eval.probes``

    Raises:
        FoldLeakageError: A test subject reached a training batch
    """
    k = folds or config.eval.folds
    repeats = repeats or config.eval.repeats
    probes = config.eval.probes if probes is None else probes
    subjects = subject_ids(samples)
    base_seed = config.train.seed
    outcomes: list[FoldOutcome] = []

    for r in range(repeats):
        assignment = make_folds(subjects, k, base_seed + r)
        for f in range(k):
            test = fold_subjects(assignment, f)
            val = fold_subjects(assignment, (f + 1) % k) if k >= 3 else []
            train = sorted(set(subjects) - set(test) - set(val))
            fold_config = config.model_copy(deep=True)
            fold_config.train.seed = derive_seed(base_seed + r, "fold", f)
            where = f"repeat {r} fold {f}"
            logger.info(f"{where}: train {len(train)} / val {len(val)} / test {len(test)} subjects")
            results, probe, reports = run_fold(
                fold_config, samples, neutrals, train, val, test, stages, probes, where
            )
            outcomes.append(FoldOutcome(r, f, train, val, test, results, probe, reports))

    per_stage = {
        stage: aggregate_results([o.results[stage] for o in outcomes])
        for stage in STAGES[:stages]
    }
    probe_reports = [o.probes for o in outcomes if o.probes is not None]
    return CrossValResult(outcomes, per_stage, mean_probe_report(probe_reports))


def _toggle(section: str, key: str, value: Any) -> Callable[[DrferConfig], DrferConfig]:
    def apply(config: DrferConfig) -> DrferConfig:
        config = config.model_copy(deep=True)
        target = config
        for part in section.split("."):
            target = getattr(target, part)
        setattr(target, key, value)
        return config

    return apply


# configuration name -> config transform; stage-depth rows come from the full run
ABLATION_VARIANTS: dict[str, Callable[[DrferConfig], DrferConfig]] = {
    "w/o L_tri": _toggle("loss", "use_triplet", False),
    "w/o L_cls": _toggle("loss", "use_cls", False),
    "w/ KL": _toggle("loss", "use_kl", True),
    "w/ JS": _toggle("loss", "use_js", True),
    "w/o Fusion": _toggle("network.fusion", "enabled", False),
    "w/o Skip": _toggle("network.fusion", "skip_connections", False),
}
STAGE_ROWS = {"Stage I": "stage1", "Stage I+II": "stage2"}
ABLATION_ROWS = (*ABLATION_VARIANTS, *STAGE_ROWS, "Full")


@dataclass
class AblationRow:
    configuration: str
    result: EvalResult

    def to_dict(self) -> AblationRowDict:
        return {
            "configuration": self.configuration,
            "accuracy_mean": self.result.mean,
            "accuracy_std": self.result.std,
            "per_fold": list(self.result.per_fold),
        }


def run_ablation(
    config: DrferConfig,
    samples: Sequence[FaceSample],
    neutrals: Sequence[FaceSample],
    folds: int | None = None,
    rows: Sequence[str] = ABLATION_ROWS,
) -> tuple[list[AblationRow], CrossValResult | None]:
    """Cross-validate each configuration of the ablation grid.

    Returns:
        (rows in ``ABLATION_ROWS`` order, the full-model cross-validation)
    """
    unknown = [r for r in rows if r not in ABLATION_ROWS]
    if unknown:
        raise InvalidArgumentError(f"Unknown ablation rows {unknown}; known: {ABLATION_ROWS}")
    out: dict[str, EvalResult] = {}
    full = None
    if "Full" in rows or any(r in STAGE_ROWS for r in rows):
        logger.info("Ablation: full model")
        full = cross_validate(config, samples, neutrals, folds, probes=False)
        out["Full"] = full.final
        for name, stage in STAGE_ROWS.items():
            out[name] = full.per_stage[stage]
    for name, transform in ABLATION_VARIANTS.items():
        if name not in rows:
            continue
        logger.info(f"Ablation: {name}")
        out[name] = cross_validate(transform(config), samples, neutrals, folds, probes=False).final
    return [AblationRow(name, out[name]) for name in ABLATION_ROWS if name in rows], full
