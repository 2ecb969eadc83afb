"""Pipeline service layer.

High-level API behind every CLI subcommand. Each method runs inside a
``RunRecorder`` so the output directory always ends with a
``run_manifest.json`` listing the config, the seed and the digest of every
artifact written.
"""

from __future__ import annotations

from collections.abc import Sequence
from enum import Enum
from pathlib import Path
from typing import Any

from pydantic import BaseModel, Field, field_validator, model_validator

from .config_schema import DrferConfig, ProjectionMethod, get_config_summary
from .data.manifest import (
    LoadedDataset,
    load_dataset,
    prepare_dataset,
    write_dataset,
    write_raw_scans,
)
from .data.samples import (
    FaceSample,
    fold_subjects,
    make_folds,
    split_by_subjects,
    subject_ids,
)
from .data.synth import SynthModel, build_synth_model, synth_generate
from .errors import CheckpointError, InvalidArgumentError
from .evalbench.crossval import ABLATION_ROWS, cross_validate, run_ablation
from .evalbench.metrics import evaluate
from .evalbench.probes import disentanglement_probe, embed_features, write_embedding
from .evalbench.report import build_results, emit_report
from .evalbench.rotation import parse_angles, rotation_benchmark
from .network.checkpoint import Checkpoint, load_checkpoint
from .training.batching import TrainingData, build_training_data
from .training.trainer import StageReport, Trainer
from .utils.artifacts import RunRecorder, read_json, write_json
from .utils.logger import get_logger
from .utils.runtime import derive_seed

logger = get_logger(__name__)

CROSSVAL_JSON = "crossval.json"
EVAL_JSON = "eval.json"
ROTATION_JSON = "rotation.json"
PROBES_JSON = "probes.json"
ABLATION_JSON = "ablation.json"
EMBEDDING_JSON = "embedding.json"


class TrainStage(str, Enum):
    """Stage selector of ``drfer train``."""
    STAGE1 = "1"
    STAGE2 = "2"
    STAGE3 = "3"
    ALL = "all"


class TrainRequest(BaseModel):
    """Validated input of a training run."""

    stage: TrainStage = Field(default=TrainStage.ALL, description="Stage(s) to run")
    checkpoint: str | None = Field(
        default=None, description="Predecessor checkpoint; required for stages 2 and 3"
    )
    data: str | None = Field(
        default=None, description="Dataset manifest; synthesised under the output dir if unset"
    )

    @field_validator("checkpoint")
    @classmethod
    def validate_checkpoint(cls, v: str | None) -> str | None:
        if v is not None and not v.strip():
            raise ValueError("checkpoint path cannot be empty")
        return v

    @model_validator(mode="after")
    def check_predecessor(self):
        if self.stage in (TrainStage.STAGE2, TrainStage.STAGE3) and not self.checkpoint:
            raise ValueError(f"--stage {self.stage.value} needs --checkpoint of the previous stage")
        if self.stage in (TrainStage.STAGE1, TrainStage.ALL) and self.checkpoint:
            raise ValueError(f"--stage {self.stage.value} starts from scratch; drop --checkpoint")
        return self


class RunResult(BaseModel):
    """Outcome of one service call."""

    command: str = Field(..., description="Subcommand name")
    out_dir: str = Field(..., description="Output directory")
    artifacts: dict[str, str] = Field(
        default_factory=dict, description="Artifact path (relative to out_dir) -> digest"
    )
    summary: dict[str, Any] = Field(default_factory=dict, description="Headline numbers")


class PipelineService:
    """Runs drfer commands against one configuration and output directory.

    Args:
        config: Validated configuration
        out_dir: Directory that receives every side effect of the run
    """

    def __init__(self, config: DrferConfig, out_dir: str | Path):
        self.config = config
        self.out_dir = Path(out_dir)
        self.seed = config.train.seed
        self.logger = logger

    # ------------------------------------------------------------------ helpers

    def _recorder(self, command: str) -> RunRecorder:
        return RunRecorder(self.out_dir, command, self.seed, get_config_summary(self.config))

    def _result(self, run: RunRecorder, summary: dict[str, Any]) -> RunResult:
        return RunResult(
            command=run.command,
            out_dir=str(self.out_dir),
            artifacts=dict(run.artifacts),
            summary=summary,
        )

    def _write(self, run: RunRecorder, name: str, payload: Any) -> Path:
        path = write_json(self.out_dir / name, payload)
        run.record_json(path, payload)
        return path

    def _synth_model(self) -> SynthModel:
        s = self.config.synth
        return build_synth_model(
            subjects=s.subjects,
            template_points=self.config.geometry.template_points,
            identity_components=s.identity_components,
            expression_components=s.expression_components,
            identity_scale=s.identity_scale,
            expression_scale=s.expression_scale,
            noise_sigma=s.noise_sigma,
            expression_jitter=s.expression_jitter,
            seed=derive_seed(self.seed, "synth", "model"),
        )

    def _generate(self, model: SynthModel, points: int):
        s = self.config.synth
        return synth_generate(
            model,
            s.subjects,
            s.expressions,
            s.intensities,
            points,
            derive_seed(self.seed, "synth", "samples"),
        )

    def _synthesize(self, target: Path, run: RunRecorder) -> Path:
        model = self._synth_model()
        dataset = self._generate(model, self.config.geometry.input_points)
        manifest = write_dataset(dataset.samples, dataset.neutrals, target)
        run.record(manifest)
        return manifest

    def _dataset(self, data: str | Path | None, run: RunRecorder) -> LoadedDataset:
        if data is None:
            self.logger.info("No --data given; synthesising the default dataset")
            manifest = self._synthesize(self.out_dir / "data", run)
        else:
            manifest = Path(data)
        loaded = load_dataset(manifest, cache_root=self.out_dir / "cache")
        if loaded.points != self.config.geometry.input_points:
            raise InvalidArgumentError(
                f"Dataset clouds have {loaded.points} points, "
                f"config expects geometry.input_points={self.config.geometry.input_points}"
            )
        return loaded

    def _holdout(self, samples: Sequence[FaceSample]) -> tuple[list[int], list[int], list[int]]:
        """(train, val, test) subjects of the single-run split."""
        subjects = subject_ids(samples)
        k = self.config.eval.folds
        test_fold = self.config.train.test_fold
        if test_fold >= k:
            raise InvalidArgumentError(f"train.test_fold={test_fold} is not below eval.folds={k}")
        assignment = make_folds(subjects, k, self.seed)
        test = fold_subjects(assignment, test_fold)
        val = fold_subjects(assignment, (test_fold + 1) % k) if k >= 3 else []
        train = sorted(set(subjects) - set(test) - set(val))
        return train, val, test

    def _training_data(self, loaded: LoadedDataset) -> TrainingData:
        train, val, test = self._holdout(loaded.samples)
        self.logger.info(
            f"Holdout split: train {len(train)} / val {len(val)} / test {len(test)} subjects"
        )
        return build_training_data(loaded.samples, loaded.neutrals, train, val, test)

    def _checkpoint(self, path: str | Path) -> Checkpoint:
        return load_checkpoint(path, network=self.config.network)

    def _test_samples(self, ck: Checkpoint, loaded: LoadedDataset) -> list[FaceSample]:
        if not ck.test_subjects:
            self.logger.warning(
                f"Checkpoint {ck.path} records no held-out subjects; scoring every sample"
            )
            return list(loaded.samples)
        test = split_by_subjects(loaded.samples, ck.test_subjects)
        if not test:
            raise CheckpointError(
                f"None of the checkpoint's test subjects {ck.test_subjects} are in the dataset"
            )
        return test

    # ------------------------------------------------------------------ commands

    def synth(self, raw: bool = False) -> RunResult:
        """Generate the synthetic dataset (and optionally raw, unregistered scans)."""
        with self._recorder("synth") as run:
            model = self._synth_model()
            dataset = self._generate(model, self.config.geometry.input_points)
            manifest = write_dataset(dataset.samples, dataset.neutrals, self.out_dir)
            run.record(manifest)
            summary: dict[str, Any] = {
                "manifest": str(manifest),
                "samples": len(dataset.samples),
                "neutrals": len(dataset.neutrals),
            }
            if raw:
                # full-resolution scans; prepare thins them with the same template-anchored FPS
                full = self._generate(model, self.config.geometry.template_points)
                raw_manifest = write_raw_scans(
                    full, model.template, self.out_dir / "raw", derive_seed(self.seed, "raw")
                )
                run.record(raw_manifest)
                summary["raw_manifest"] = str(raw_manifest)
            return self._result(run, summary)

    def prepare(self, raw_manifest: str | Path, template: str | Path | None = None) -> RunResult:
        """Register and resample raw scans into a canonical dataset."""
        with self._recorder("prepare") as run:
            g = self.config.geometry
            manifest = prepare_dataset(
                raw_manifest,
                self.out_dir,
                g.input_points,
                template_path=template,
                max_iters=g.icp_max_iters,
                tol=g.icp_tol,
            )
            run.record(manifest)
            return self._result(run, {"manifest": str(manifest)})

    def train(self, request: TrainRequest) -> tuple[RunResult, list[StageReport]]:
        """Run one stage, or all three, on the holdout split.

        Checkpoints land in ``<out>/checkpoints/<stage>.pt`` and per-stage
        histories in ``<out>/reports/<stage>.json``.
        """
        with self._recorder("train") as run:
            loaded = self._dataset(request.data, run)
            data = self._training_data(loaded)
            ck_dir = self.out_dir / "checkpoints"
            if request.stage is TrainStage.ALL:
                trainer = Trainer(self.config, data, checkpoint_dir=ck_dir)
                by_stage = trainer.run_all()
            elif request.stage is TrainStage.STAGE1:
                trainer = Trainer(self.config, data, checkpoint_dir=ck_dir)
                by_stage = {"stage1": trainer.run_stage1()}
            else:
                tag = f"stage{request.stage.value}"
                trainer = Trainer.from_checkpoint(
                    self.config, data, request.checkpoint, tag, ck_dir
                )
                runner = trainer.run_stage2 if tag == "stage2" else trainer.run_stage3
                by_stage = {tag: runner()}

            reports: list[StageReport] = []
            for tag, stage_reports in by_stage.items():
                run.record(ck_dir / f"{tag}.pt", digest=stage_reports[-1].checkpoint_id)
                self._write(run, f"reports/{tag}.json", [r.to_dict() for r in stage_reports])
                reports += stage_reports
            test = split_by_subjects(loaded.samples, data.test_subjects)
            summary: dict[str, Any] = {"stages": list(by_stage)}
            if test:
                result = evaluate(trainer.model, test, self.config.eval.batch_size)
                self._write(run, EVAL_JSON, result.to_dict())
                summary["test_accuracy"] = result.accuracy
            return self._result(run, summary), reports

    def evaluate(self, checkpoint: str | Path, data: str | Path | None = None) -> RunResult:
        """Score a checkpoint on its held-out subjects."""
        with self._recorder("eval") as run:
            loaded = self._dataset(data, run)
            ck = self._checkpoint(checkpoint)
            test = self._test_samples(ck, loaded)
            result = evaluate(ck.model, test, self.config.eval.batch_size)
            payload = {"checkpoint_id": ck.checkpoint_id, "stage": ck.stage, **result.to_dict()}
            self._write(run, EVAL_JSON, payload)
            return self._result(run, {"accuracy": result.accuracy, "samples": result.total})

    def crossval(
        self,
        data: str | Path | None = None,
        folds: int | None = None,
        probes: bool | None = None,
    ) -> RunResult:
        """Subject-independent k-fold cross-validation of the full pipeline."""
        with self._recorder("crossval") as run:
            loaded = self._dataset(data, run)
            result = cross_validate(
                self.config, loaded.samples, loaded.neutrals, folds=folds, probes=probes
            )
            payload = result.to_dict()
            self._write(run, CROSSVAL_JSON, payload)
            summary = {
                "folds": folds or self.config.eval.folds,
                "per_stage": {k: v.to_dict() for k, v in result.per_stage.items()},
            }
            return self._result(run, summary)

    def rotate_bench(
        self,
        checkpoint: str | Path,
        angles: str | Sequence[float] | None = None,
        data: str | Path | None = None,
    ) -> RunResult:
        """Accuracy under synthetic self-occlusion for the 17 pitch/yaw poses."""
        with self._recorder("rotate-bench") as run:
            loaded = self._dataset(data, run)
            ck = self._checkpoint(checkpoint)
            test = self._test_samples(ck, loaded)
            chosen = parse_angles(angles) if angles is not None else list(self.config.eval.angles)
            g = self.config.geometry
            curve = rotation_benchmark(
                ck.model,
                test,
                chosen,
                input_points=g.input_points,
                gamma=g.hpr_gamma,
                viewpoint_factor=g.viewpoint_factor,
                batch_size=self.config.eval.batch_size,
            )
            payload = {
                "checkpoint_id": ck.checkpoint_id,
                "angles": chosen,
                "curve": curve.to_dict(),
            }
            self._write(run, ROTATION_JSON, payload)
            return self._result(run, {"poses": len(curve.entries), "curve": curve.to_dict()})

    def probe(
        self,
        checkpoint: str | Path,
        baseline: str | Path | None = None,
        data: str | Path | None = None,
    ) -> RunResult:
        """Linear probes for expression and identity on the expression feature."""
        with self._recorder("probe") as run:
            loaded = self._dataset(data, run)
            ck = self._checkpoint(checkpoint)
            base = self._checkpoint(baseline) if baseline else None
            test = self._test_samples(ck, loaded)
            report = disentanglement_probe(
                ck.model,
                test,
                base.model if base else None,
                self.config.eval.batch_size,
                seed=self.seed,
            )
            self._write(run, PROBES_JSON, report.to_dict())
            return self._result(run, report.to_dict())

    def embed(
        self,
        checkpoint: str | Path,
        method: ProjectionMethod | str | None = None,
        data: str | Path | None = None,
    ) -> RunResult:
        """Export expression features and their 2-D projection."""
        with self._recorder("embed") as run:
            loaded = self._dataset(data, run)
            ck = self._checkpoint(checkpoint)
            test = self._test_samples(ck, loaded)
            method = ProjectionMethod(method or self.config.eval.embedding_method)
            embedding = embed_features(
                ck.model,
                test,
                method,
                seed=self.seed,
                perplexity=self.config.eval.tsne_perplexity,
                batch_size=self.config.eval.batch_size,
            )
            json_path, npy_path = write_embedding(embedding, self.out_dir)
            run.record_json(json_path, embedding.to_dict())
            run.record(npy_path)
            return self._result(run, {"method": method.value, "samples": len(test)})

    def ablate(
        self,
        data: str | Path | None = None,
        folds: int | None = None,
        rows: Sequence[str] = ABLATION_ROWS,
    ) -> RunResult:
        """Cross-validate every row of the ablation grid."""
        with self._recorder("ablate") as run:
            loaded = self._dataset(data, run)
            table, full = run_ablation(self.config, loaded.samples, loaded.neutrals, folds, rows)
            payload = {
                "rows": [r.to_dict() for r in table],
                "full": full.to_dict() if full is not None else None,
            }
            self._write(run, ABLATION_JSON, payload)
            return self._result(run, {"rows": payload["rows"]})

    def report(self, results_dir: str | Path) -> RunResult:
        """Merge the JSON outputs found in ``results_dir`` into a report bundle.

        Cross-validation results take precedence over a single holdout
        evaluation for the accuracy and confusion fields.
        """
        results_dir = Path(results_dir)
        if not results_dir.is_dir():
            raise InvalidArgumentError(f"Results directory not found: {results_dir}")

        def _load(name: str) -> Any:
            path = results_dir / name
            return read_json(path) if path.exists() else None

        crossval = _load(CROSSVAL_JSON)
        holdout = _load(EVAL_JSON)
        rotation = _load(ROTATION_JSON)
        probes = _load(PROBES_JSON)
        ablation = _load(ABLATION_JSON)
        embedding = _load(EMBEDDING_JSON)
        found = [
            n
            for n, v in (
                (CROSSVAL_JSON, crossval),
                (EVAL_JSON, holdout),
                (ROTATION_JSON, rotation),
                (PROBES_JSON, probes),
                (ABLATION_JSON, ablation),
                (EMBEDDING_JSON, embedding),
            )
            if v is not None
        ]
        if not found:
            raise InvalidArgumentError(f"No drfer result files in {results_dir}")
        self.logger.info(f"Building report from {', '.join(found)}")

        with self._recorder("report") as run:
            protocol = "none"
            folds: list[dict[str, Any]] = []
            headline: dict[str, Any] | None = None
            if crossval is not None:
                protocol = f"{self.config.eval.folds}-fold subject-independent cross-validation"
                folds = crossval.get("folds", [])
                headline = crossval.get("final")
                probes = probes or crossval.get("probes")
            elif holdout is not None:
                protocol = f"holdout fold {self.config.train.test_fold}"
                headline = holdout
            results = build_results(
                protocol,
                self.seed,
                folds=folds,
                accuracy_mean=headline.get("accuracy_mean") if headline else None,
                accuracy_std=headline.get("accuracy_std") if headline else None,
                confusion=headline.get("confusion") if headline else None,
                rotation_curve=rotation.get("curve") if rotation else None,
                probes=probes,
                ablations=ablation.get("rows") if ablation else None,
            )
            paths = emit_report(results, self.out_dir, embedding)
            for name, path in paths.items():
                if name.endswith(".json"):
                    run.record_json(path, results)
                else:
                    run.record(path)
            return self._result(run, {"inputs": found, "files": sorted(paths)})
