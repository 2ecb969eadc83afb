"""Tests for the pipeline service layer."""

import json

import pytest
from pydantic import ValidationError

from drfer.config_schema import DrferConfig
from drfer.data import write_dataset
from drfer.errors import InvalidArgumentError, ReportWriteError
from drfer.service import (
    EVAL_JSON,
    ROTATION_JSON,
    PipelineService,
    TrainRequest,
    TrainStage,
)
from drfer.utils.artifacts import RunRecorder, json_digest, write_json


@pytest.fixture
def service(tiny_config, tmp_path):
    return PipelineService(tiny_config, tmp_path / "out")


class TestTrainRequest:
    def test_defaults(self):
        request = TrainRequest()
        assert request.stage is TrainStage.ALL
        assert request.checkpoint is None

    @pytest.mark.parametrize("stage", ["2", "3"])
    def test_later_stages_need_a_checkpoint(self, stage):
        with pytest.raises(ValidationError, match="needs --checkpoint"):
            TrainRequest(stage=stage)
        assert TrainRequest(stage=stage, checkpoint="s.pt").checkpoint == "s.pt"

    def test_scratch_stages_reject_a_checkpoint(self):
        with pytest.raises(ValidationError, match="from scratch"):
            TrainRequest(stage="1", checkpoint="s.pt")

    def test_blank_checkpoint(self):
        with pytest.raises(ValidationError, match="empty"):
            TrainRequest(stage="2", checkpoint="  ")


class TestRunRecorder:
    def test_complete_manifest(self, tmp_path):
        with RunRecorder(tmp_path, "synth", 3, {"a": 1}) as run:
            path = write_json(tmp_path / "x.json", {"v": 1, "wall_seconds": 9.0})
            run.record_json(path, {"v": 1, "wall_seconds": 9.0})
        manifest = json.loads((tmp_path / "run_manifest.json").read_text(encoding="utf-8"))
        assert manifest["status"] == "complete"
        assert manifest["artifacts"] == {"x.json": json_digest({"v": 1})}

    def test_failed_run_is_marked_incomplete(self, tmp_path):
        with pytest.raises(RuntimeError):
            with RunRecorder(tmp_path, "train", 3, {}):
                raise RuntimeError("diverged")
        manifest = json.loads((tmp_path / "run_manifest.json").read_text(encoding="utf-8"))
        assert manifest["status"] == "incomplete"
        assert manifest["error"] == "diverged"

    def test_unwritable_output(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("x", encoding="utf-8")
        with pytest.raises(ReportWriteError):
            with RunRecorder(blocker / "sub", "synth", 0, {}):
                pass


def test_synth_with_raw_scans(service):
    result = service.synth(raw=True)
    assert result.summary["samples"] == 72
    assert result.summary["neutrals"] == 6
    assert "manifest.json" in result.artifacts
    assert "raw/raw_manifest.json" in result.artifacts


def test_dataset_point_count_must_match(service, tiny_dataset, tmp_path, tiny_dict):
    manifest = write_dataset(tiny_dataset.samples, tiny_dataset.neutrals, tmp_path / "ds")
    tiny_dict["geometry"]["input_points"] = 32
    tiny_dict["network"]["branch"]["input_points"] = 32
    tiny_dict["network"]["branch"]["output_points"] = 32
    other = PipelineService(DrferConfig(**tiny_dict), tmp_path / "other")
    with pytest.raises(InvalidArgumentError, match="input_points=32"):
        other.evaluate(tmp_path / "missing.pt", data=manifest)


def test_holdout_needs_test_fold_below_folds(tiny_dict, tiny_dataset, tmp_path):
    tiny_dict["train"]["test_fold"] = 3
    service = PipelineService(DrferConfig(**tiny_dict), tmp_path)
    with pytest.raises(InvalidArgumentError, match="test_fold"):
        service._holdout(tiny_dataset.samples)


def test_holdout_split_is_disjoint(service, tiny_dataset):
    train, val, test = service._holdout(tiny_dataset.samples)
    assert len(test) == len(val) == 2 and len(train) == 2
    assert sorted(train + val + test) == list(range(6))


class TestReport:
    def test_missing_directory(self, service, tmp_path):
        with pytest.raises(InvalidArgumentError, match="not found"):
            service.report(tmp_path / "nope")

    def test_merges_holdout_and_rotation(self, service, tmp_path):
        results = tmp_path / "results"
        write_json(
            results / EVAL_JSON,
            {
                "accuracy": 0.5,
                "accuracy_mean": 0.5,
                "accuracy_std": 0.0,
                "confusion": [[1 if i == j else 0 for j in range(6)] for i in range(6)],
            },
        )
        write_json(
            results / ROTATION_JSON,
            {
                "curve": [
                    {
                        "axis": "frontal",
                        "angle": 0.0,
                        "accuracy": 0.5,
                        "retained_median": 60.0,
                        "retained_min": 50,
                        "retained_max": 64,
                        "evaluated": 12,
                        "undefined": 0,
                    }
                ]
            },
        )
        result = service.report(results)
        assert result.summary["inputs"] == [EVAL_JSON, ROTATION_JSON]
        payload = json.loads((service.out_dir / "results.json").read_text(encoding="utf-8"))
        assert payload["protocol"] == "holdout fold 0"
        assert payload["accuracy_mean"] == 0.5
        assert len(payload["rotation_curve"]) == 1
        assert "results.json" in result.artifacts
