"""Three-stage training.

Stage one pretrains the expression encoder and head, the identity encoder and
head, and the fusion module, each on its own objective. Stage two fine-tunes
both branches as autoencoders with fresh decoders. Stage three trains
everything (except the identity head) end to end with the cross-over wiring.

A ``Trainer`` owns one model and one ``TrainingData``. It enforces stage order
through ``stage_tag`` and records every subject it has batched.
"""

from __future__ import annotations

import time
from collections import defaultdict
from collections.abc import Callable, Iterable
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import torch
import torch.nn as nn
import torch.nn.functional as F

from ..config_schema import DrferConfig
from ..errors import CheckpointError, TrainingDivergedError
from ..losses import (
    batch_triplet,
    chamfer_batch,
    cross_entropy,
    distribution_loss,
    recon_loss,
    stage_loss,
    stage_terms,
)
from ..network.checkpoint import (
    check_stage_order,
    checkpoint_id,
    load_checkpoint,
    save_checkpoint,
)
from ..network.model import DrFERModel, count_parameters
from ..utils.logger import get_logger, log_step
from ..utils.runtime import derive_rng, derive_seed, seed_everything, set_deterministic
from .batching import (
    Batch,
    MeanFaceBank,
    TrainingData,
    iterate_batches,
    make_batch,
    steps_per_epoch,
)

logger = get_logger(__name__)

StepFn = Callable[[Batch], tuple[torch.Tensor, dict[str, float], torch.Tensor | None]]


@dataclass
class EpochRecord:
    epoch: int
    steps: int
    total: float
    terms: dict[str, float]
    train_accuracy: float | None = None
    val_accuracy: float | None = None
    val_metrics: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "epoch": self.epoch,
            "steps": self.steps,
            "total": self.total,
            "terms": dict(self.terms),
            "train_accuracy": self.train_accuracy,
            "val_accuracy": self.val_accuracy,
            "val_metrics": dict(self.val_metrics),
        }


@dataclass
class StageReport:
    """Per-epoch history of one trained component.

    Attributes:
        stage: Checkpoint tag the stage produces (``stage1`` ...)
        component: ``expression``, ``identity``, ``fusion``, ``joint`` or ``baseline``
        loss_stage: Objective tag passed to ``stage_loss``
        terms: Term names of the objective
        epochs: Records numbered contiguously from 0
        initial_metrics: Held-out metrics before the first update
        checkpoint_id: Content hash of the model after the stage
        wall_seconds: Elapsed time (excluded from digests)
    """

    stage: str
    component: str
    loss_stage: str
    terms: tuple[str, ...]
    epochs: list[EpochRecord] = field(default_factory=list)
    initial_metrics: dict[str, float] = field(default_factory=dict)
    checkpoint_id: str | None = None
    wall_seconds: float = 0.0

    @property
    def final(self) -> EpochRecord | None:
        return self.epochs[-1] if self.epochs else None

    def to_dict(self) -> dict[str, Any]:
        return {
            "stage": self.stage,
            "component": self.component,
            "loss_stage": self.loss_stage,
            "terms": list(self.terms),
            "epochs": [e.to_dict() for e in self.epochs],
            "initial_metrics": dict(self.initial_metrics),
            "checkpoint_id": self.checkpoint_id,
            "wall_seconds": self.wall_seconds,
        }


def _parameters(*modules: nn.Module | None) -> list[nn.Parameter]:
    return [p for m in modules if m is not None for p in m.parameters()]


def _reset_parameters(module: nn.Module) -> None:
    for m in module.modules():
        if m is not module and hasattr(m, "reset_parameters"):
            m.reset_parameters()


class Trainer:
    """Runs the training stages on one model.

    Args:
        config: Full configuration
        data: Training split
        model: Existing model; a fresh one is built (seeded) when omitted
        checkpoint_dir: When set, each stage saves ``<tag>.pt`` here
        stage_tag: Tag of ``model``'s current training state
    """

    def __init__(
        self,
        config: DrferConfig,
        data: TrainingData,
        model: DrFERModel | None = None,
        checkpoint_dir: str | Path | None = None,
        stage_tag: str = "init",
    ):
        self.config = config
        self.data = data
        self.seed = config.train.seed
        set_deterministic(config.train.deterministic)
        if model is None:
            seed_everything(self.seed)
            model = DrFERModel(config.network, len(data.identity_labels))
            logger.info(f"Built model with {count_parameters(model):,} parameters")
        elif model.num_identities != len(data.identity_labels):
            raise CheckpointError(
                f"Model has {model.num_identities} identity classes, "
                f"training data has {len(data.identity_labels)} subjects"
            )
        self.model = model
        self.checkpoint_dir = Path(checkpoint_dir) if checkpoint_dir else None
        self.stage_tag = stage_tag
        self.seen_subjects: set[int] = set()
        self.bank = MeanFaceBank(data.mean_faces, data.neutrals)
        self.unit = config.loss.recon_unit_mm

    @classmethod
    def from_checkpoint(
        cls,
        config: DrferConfig,
        data: TrainingData,
        path: str | Path,
        runner_stage: str,
        checkpoint_dir: str | Path | None = None,
    ) -> Trainer:
        """Resume from a checkpoint that must precede ``runner_stage``."""
        ck = load_checkpoint(path, network=config.network, runner_stage=runner_stage)
        if ck.identity_labels and ck.identity_labels != data.identity_labels:
            raise CheckpointError(
                f"Checkpoint {path} was trained on subjects {ck.identity_labels}, "
                f"not {data.identity_labels}"
            )
        return cls(config, data, ck.model, checkpoint_dir, stage_tag=ck.stage)

    # ------------------------------------------------------------------ helpers

    def _finish(self, tag: str, reports: list[StageReport]) -> list[StageReport]:
        self.stage_tag = tag
        if self.checkpoint_dir is not None:
            ck_id = self.save(self.checkpoint_dir / f"{tag}.pt")
        else:
            state = {k: v.detach().cpu() for k, v in self.model.state_dict().items()}
            ck_id = checkpoint_id(state, self.model.config.model_dump(mode="json"), tag)
        for report in reports:
            report.checkpoint_id = ck_id
        return reports

    def save(self, path: str | Path) -> str:
        return save_checkpoint(
            self.model,
            path,
            self.stage_tag,
            identity_labels=self.data.identity_labels,
            test_subjects=self.data.test_subjects,
        )

    def _eval_samples(self):
        return self.data.val if self.data.val else self.data.train

    def _triplet_features(self, feature: torch.Tensor) -> torch.Tensor:
        return F.normalize(feature, dim=-1) if self.config.loss.triplet_normalize else feature

    def _expression_parts(
        self, names: Iterable[str], feature: torch.Tensor, batch: Batch
    ) -> dict[str, torch.Tensor]:
        cfg = self.config.loss
        parts: dict[str, torch.Tensor] = {}
        if "cls_exp" in names:
            parts["cls_exp"] = cross_entropy(self.model.expression_head(feature), batch.expressions)
        if "tri" in names:
            tri = batch_triplet(
                self._triplet_features(feature), batch.expressions, cfg.margin, cfg.mining
            )
            parts["tri"] = tri.value
        if "dist" in names:
            kind = "kl" if cfg.use_kl else "js"
            parts["dist"] = distribution_loss(kind, feature).value
        return parts

    @torch.no_grad()
    def measure(self, samples, metrics: Iterable[str]) -> dict[str, float]:
        """Held-out metrics in eval mode; Chamfer values are in mm^2.

        Supported names: ``accuracy``, ``rec_exp``, ``rec_id``, ``rec_exp_id``
        and ``rec_id_exp`` (cross-over outputs against the mean neutral),
        ``rec_ori`` (fusion of the branch outputs) and ``rec_fusion`` (fusion
        of mean-face pairs).
        """
        wanted = set(metrics)
        if self.model.fusion is None:
            wanted -= {"rec_ori", "rec_fusion"}
        if not samples or not wanted:
            return {}
        model = self.model
        was_training = model.training
        model.eval()
        sums: dict[str, float] = defaultdict(float)
        count = 0
        for chunk in iterate_batches(samples, self.config.eval.batch_size, None):
            batch = make_batch(chunk, self.data)
            targets = self.bank.targets(batch)
            feature, exp_recon = model.expression(batch.points)
            _, id_recon = model.identity(batch.points)
            values: dict[str, torch.Tensor] = {}
            if "accuracy" in wanted:
                pred = model.expression_head(feature).argmax(dim=-1)
                values["accuracy"] = (pred == batch.expressions).float()
            if "rec_exp" in wanted:
                values["rec_exp"] = chamfer_batch(exp_recon, targets["mean_expression"])
            if "rec_id" in wanted:
                values["rec_id"] = chamfer_batch(id_recon, targets["neutral"])
            if wanted & {"rec_exp_id", "rec_id_exp"}:
                exp_id, id_exp = model.cross_reconstruct(exp_recon, id_recon)
                values["rec_exp_id"] = chamfer_batch(exp_id, targets["mean_neutral"])
                values["rec_id_exp"] = chamfer_batch(id_exp, targets["mean_neutral"])
            if "rec_ori" in wanted:
                fused = model.fusion(exp_recon, id_recon)
                values["rec_ori"] = chamfer_batch(fused, batch.clean)
            if "rec_fusion" in wanted:
                fused = model.fusion(targets["mean_expression"], targets["neutral"])
                values["rec_fusion"] = chamfer_batch(fused, batch.clean)
            for name, v in values.items():
                sums[name] += float(v.sum())
            count += len(batch)
        model.train(was_training)
        return {k: v / count for k, v in sums.items() if k in wanted}

    def _fit(
        self,
        stage: int,
        component: str,
        loss_stage: str,
        modules: list[nn.Module | None],
        step_fn: StepFn,
        val_metrics: list[str],
        augment: bool = True,
    ) -> StageReport:
        schedule = self.config.train.schedule(stage)
        tag = f"stage{stage}"
        with_fusion = self.model.fusion is not None
        report = StageReport(
            stage=tag,
            component=component,
            loss_stage=loss_stage,
            terms=stage_terms(loss_stage, self.config.loss, with_fusion),
        )
        params = _parameters(*modules)
        optimizer = torch.optim.Adam(
            params, lr=schedule.learning_rate, betas=tuple(self.config.train.betas)
        )
        torch.manual_seed(derive_seed(self.seed, tag, component))
        eval_samples = self._eval_samples()
        report.initial_metrics = self.measure(eval_samples, val_metrics)
        augment_config = self.config.train.augment if augment else None

        logger.info(
            f"{tag}/{component}: {len(self.data.train)} samples, "
            f"{steps_per_epoch(len(self.data.train), schedule.batch_size)} steps of "
            f"{schedule.batch_size} x {schedule.epochs} epochs, lr {schedule.learning_rate:g}"
        )
        start = time.perf_counter()
        for epoch in range(schedule.epochs):
            self.model.train()
            rng = derive_rng(self.seed, tag, component, epoch)
            term_sums: dict[str, float] = defaultdict(float)
            total_sum = 0.0
            correct = seen = steps = 0
            for step, chunk in enumerate(
                iterate_batches(self.data.train, schedule.batch_size, rng)
            ):
                batch = make_batch(chunk, self.data, rng, augment_config)
                self.seen_subjects.update(batch.subjects)
                total, breakdown, logits = step_fn(batch)
                if not torch.isfinite(total):
                    logger.error(
                        f"{tag}/{component}: non-finite loss at epoch {epoch} step {step}: "
                        f"{breakdown}"
                    )
                    raise TrainingDivergedError(
                        f"{tag}/{component} diverged at epoch {epoch}, step {step}"
                    )
                self.model.zero_grad(set_to_none=True)
                total.backward()
                optimizer.step()

                value = float(total.detach())
                log_step(logger, loss_stage, component, epoch, step, breakdown, value)
                for k, v in breakdown.items():
                    term_sums[k] += v
                total_sum += value
                steps += 1
                if logits is not None:
                    correct += int((logits.detach().argmax(-1) == batch.expressions).sum())
                    seen += len(batch)

            val = self.measure(eval_samples, val_metrics)
            record = EpochRecord(
                epoch=epoch,
                steps=steps,
                total=total_sum / max(steps, 1),
                terms={k: v / max(steps, 1) for k, v in term_sums.items()},
                train_accuracy=correct / seen if seen else None,
                val_accuracy=val.pop("accuracy", None),
                val_metrics=val,
            )
            report.epochs.append(record)
            message = f"{tag}/{component} epoch {epoch}: loss {record.total:.4f}"
            if record.train_accuracy is not None:
                message += f", train acc {record.train_accuracy:.3f}"
            if record.val_accuracy is not None:
                message += f", val acc {record.val_accuracy:.3f}"
            logger.info(message)
        report.wall_seconds = time.perf_counter() - start
        return report

    # ------------------------------------------------------------------ stages

    def _expression_pretrain(self, component: str) -> StageReport:
        model = self.model

        def step(batch: Batch):
            feature = model.expression.encode(batch.points).feature
            logits = model.expression_head(feature)
            total, breakdown = stage_loss(
                "1exp", {"cls_exp": cross_entropy(logits, batch.expressions)}, self.config.loss
            )
            return total, breakdown, logits

        return self._fit(
            1,
            component,
            "1exp",
            [model.expression.encoder, model.expression_head],
            step,
            ["accuracy"],
        )

    def run_stage1(self) -> list[StageReport]:
        """Pretrain expression encoder+head, identity encoder+head and fusion."""
        check_stage_order(self.stage_tag, "stage1")
        model = self.model
        reports = [self._expression_pretrain("expression")]

        def identity_step(batch: Batch):
            feature = model.identity.encode(batch.points).feature
            logits = model.identity_head(feature)
            total, breakdown = stage_loss(
                "1id", {"cls_id": cross_entropy(logits, batch.identity_targets)}, self.config.loss
            )
            return total, breakdown, None

        reports.append(
            self._fit(
                1,
                "identity",
                "1id",
                [model.identity.encoder, model.identity_head],
                identity_step,
                val_metrics=[],
            )
        )

        if model.fusion is not None:

            def fusion_step(batch: Batch):
                targets = self.bank.targets(batch)
                fused = model.fusion(targets["mean_expression"], targets["neutral"])
                rec = recon_loss("ori", {"fused": fused}, targets, unit=self.unit)
                total, breakdown = stage_loss("1fus", {"rec_ori": rec}, self.config.loss)
                return total, breakdown, None

            reports.append(
                self._fit(
                    1,
                    "fusion",
                    "1fus",
                    [model.fusion],
                    fusion_step,
                    val_metrics=["rec_fusion"],
                    augment=False,
                )
            )
        return self._finish("stage1", reports)

    def run_baseline(self) -> list[StageReport]:
        """Stage-one expression branch + head only: the comparison baseline."""
        check_stage_order(self.stage_tag, "stage1")
        return self._finish("stage1", [self._expression_pretrain("baseline")])

    def run_stage2(self) -> list[StageReport]:
        """Fine-tune both branches as autoencoders; decoders start fresh."""
        check_stage_order(self.stage_tag, "stage2")
        model = self.model
        torch.manual_seed(derive_seed(self.seed, "stage2", "decoders"))
        _reset_parameters(model.expression.decoder)
        _reset_parameters(model.identity.decoder)
        exp_terms = stage_terms("2exp", self.config.loss)

        def expression_step(batch: Batch):
            feature, recon = model.expression(batch.points)
            targets = self.bank.targets(batch)
            parts = self._expression_parts(exp_terms, feature, batch)
            parts["rec_exp"] = recon_loss("exp", {"exp": recon}, targets, unit=self.unit)
            total, breakdown = stage_loss("2exp", parts, self.config.loss)
            logits = model.expression_head(feature) if "cls_exp" in exp_terms else None
            return total, breakdown, logits

        def identity_step(batch: Batch):
            _, recon = model.identity(batch.points)
            rec = recon_loss("id", {"id": recon}, self.bank.targets(batch), unit=self.unit)
            total, breakdown = stage_loss("2id", {"rec_id": rec}, self.config.loss)
            return total, breakdown, None

        reports = [
            self._fit(
                2,
                "expression",
                "2exp",
                [model.expression, model.expression_head],
                expression_step,
                val_metrics=["accuracy", "rec_exp"],
            ),
            self._fit(2, "identity", "2id", [model.identity], identity_step, ["rec_id"]),
        ]
        return self._finish("stage2", reports)

    def run_stage3(self) -> list[StageReport]:
        """Joint training with the cross-over wiring."""
        check_stage_order(self.stage_tag, "stage3")
        model = self.model
        model.check_reentry()
        with_fusion = model.fusion is not None
        terms = stage_terms("3", self.config.loss, with_fusion)

        def joint_step(batch: Batch):
            out = model.disentangle(batch.points)
            targets = self.bank.targets(batch)
            outputs = {
                "exp": out.exp_recon,
                "id": out.id_recon,
                "exp_id": out.exp_id,
                "id_exp": out.id_exp,
                "fused": out.fused,
            }
            parts = self._expression_parts(terms, out.exp_feature, batch)
            parts["rec_exp"] = recon_loss("exp", outputs, targets, unit=self.unit)
            parts["rec_id"] = recon_loss("id", outputs, targets, unit=self.unit)
            parts["rec_dis"] = recon_loss("dis", outputs, targets, unit=self.unit)
            if with_fusion:
                parts["rec_ori"] = recon_loss("ori", outputs, targets, unit=self.unit)
            total, breakdown = stage_loss("3", parts, self.config.loss, with_fusion)
            return total, breakdown, out.exp_logits

        metrics = ["accuracy", "rec_exp", "rec_id", "rec_exp_id", "rec_id_exp"]
        if with_fusion:
            metrics.append("rec_ori")
        report = self._fit(
            3,
            "joint",
            "3",
            [model.expression, model.identity, model.expression_head, model.fusion],
            joint_step,
            metrics,
        )
        return self._finish("stage3", [report])

    def run_all(self) -> dict[str, list[StageReport]]:
        return {
            "stage1": self.run_stage1(),
            "stage2": self.run_stage2(),
            "stage3": self.run_stage3(),
        }


def run_stage1(
    config: DrferConfig, data: TrainingData, checkpoint_dir: str | Path | None = None
) -> tuple[Trainer, list[StageReport]]:
    trainer = Trainer(config, data, checkpoint_dir=checkpoint_dir)
    return trainer, trainer.run_stage1()


def run_baseline(
    config: DrferConfig, data: TrainingData, checkpoint_dir: str | Path | None = None
) -> tuple[Trainer, list[StageReport]]:
    trainer = Trainer(config, data, checkpoint_dir=checkpoint_dir)
    return trainer, trainer.run_baseline()


def run_stage2(
    config: DrferConfig,
    data: TrainingData,
    checkpoint: str | Path,
    checkpoint_dir: str | Path | None = None,
) -> tuple[Trainer, list[StageReport]]:
    trainer = Trainer.from_checkpoint(config, data, checkpoint, "stage2", checkpoint_dir)
    return trainer, trainer.run_stage2()


def run_stage3(
    config: DrferConfig,
    data: TrainingData,
    checkpoint: str | Path,
    checkpoint_dir: str | Path | None = None,
) -> tuple[Trainer, list[StageReport]]:
    trainer = Trainer.from_checkpoint(config, data, checkpoint, "stage3", checkpoint_dir)
    return trainer, trainer.run_stage3()
