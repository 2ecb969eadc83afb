"""Smoke tests for the drfer CLI."""

import json

import pytest
from click.testing import CliRunner

from drfer.main import cli

COMMANDS = [
    "synth",
    "prepare",
    "train",
    "eval",
    "crossval",
    "rotate-bench",
    "probe",
    "embed",
    "ablate",
    "report",
]


def test_cli_help_displays_usage() -> None:
    """Invoking the CLI with --help should exit cleanly and list every subcommand."""
    runner = CliRunner()
    result = runner.invoke(cli, ["--help"])

    assert result.exit_code == 0
    assert "disentangled 3D facial expression recognition" in result.output
    for command in COMMANDS:
        assert command in result.output


@pytest.mark.parametrize("command", COMMANDS)
def test_common_options(command) -> None:
    result = CliRunner().invoke(cli, [command, "--help"])
    assert result.exit_code == 0
    for flag in ("--config", "--out", "--seed", "--set", "--json-logs", "--debug"):
        assert flag in result.output


def test_train_options() -> None:
    result = CliRunner().invoke(cli, ["train", "--help"])
    for flag in ("--stage", "--checkpoint", "--data"):
        assert flag in result.output


def test_unknown_flag_is_a_usage_error(tmp_path) -> None:
    result = CliRunner().invoke(cli, ["train", "--bogus", "--out", str(tmp_path / "run")])
    assert result.exit_code == 2
    assert list(tmp_path.iterdir()) == []


def test_later_stage_needs_a_checkpoint(tmp_path, tiny_config_file) -> None:
    out = tmp_path / "run"
    result = CliRunner().invoke(
        cli, ["train", "--stage", "2", "-c", str(tiny_config_file), "-o", str(out)]
    )
    assert result.exit_code == 1
    assert "needs --checkpoint" in result.output
    assert not out.exists()


def test_bad_override_fails_cleanly(tmp_path, tiny_config_file) -> None:
    result = CliRunner().invoke(
        cli,
        ["synth", "-c", str(tiny_config_file), "-o", str(tmp_path), "--set", "train.seed"],
    )
    assert result.exit_code == 1
    assert "key.path=value" in result.output


def test_report_without_results(tmp_path, tiny_config_file) -> None:
    empty = tmp_path / "empty"
    empty.mkdir()
    result = CliRunner().invoke(
        cli,
        ["report", "-c", str(tiny_config_file), "-o", str(tmp_path / "r"), "--results", str(empty)],
    )
    assert result.exit_code == 1
    assert "No drfer result files" in result.output


def test_synth_writes_a_dataset(tmp_path, tiny_config_file) -> None:
    result = CliRunner().invoke(
        cli, ["synth", "-c", str(tiny_config_file), "-o", str(tmp_path), "--seed", "4"]
    )
    assert result.exit_code == 0, result.output
    manifest = json.loads((tmp_path / "manifest.json").read_text(encoding="utf-8"))
    assert len(manifest["samples"]) == 72
    run = json.loads((tmp_path / "run_manifest.json").read_text(encoding="utf-8"))
    assert run["status"] == "complete" and run["seed"] == 4
    assert (tmp_path / "logs" / "drfer.jsonl").exists()


@pytest.mark.slow
def test_train_is_reproducible_then_benchmarks(tmp_path, tiny_config_file) -> None:
    runner = CliRunner()
    cfg = ["-c", str(tiny_config_file), "--seed", "13"]
    manifests = []
    for name in ("a", "b"):
        out = tmp_path / name
        result = runner.invoke(cli, ["train", *cfg, "-o", str(out)])
        assert result.exit_code == 0, result.output
        manifests.append(json.loads((out / "run_manifest.json").read_text(encoding="utf-8")))
    assert manifests[0] == manifests[1]
    assert "checkpoints/stage3.pt" in manifests[0]["artifacts"]

    run = tmp_path / "a"
    checkpoint = str(run / "checkpoints" / "stage3.pt")
    data = str(run / "data" / "manifest.json")
    results = str(tmp_path / "results")
    for args in (
        ["eval", "--checkpoint", checkpoint],
        ["rotate-bench", "--checkpoint", checkpoint, "--angles", "30"],
    ):
        result = runner.invoke(cli, [*args, *cfg, "--data", data, "-o", results])
        assert result.exit_code == 0, result.output

    result = runner.invoke(
        cli, ["report", *cfg, "--results", results, "-o", str(tmp_path / "report")]
    )
    assert result.exit_code == 0, result.output
    for name in ("results.json", "summary.txt", "rotation_curve.png", "confusion_matrix.png"):
        assert (tmp_path / "report" / name).exists()
    payload = json.loads((tmp_path / "report" / "results.json").read_text(encoding="utf-8"))
    assert len(payload["rotation_curve"]) == 5
