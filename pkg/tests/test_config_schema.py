"""Tests for configuration schema validation."""

import json

import pytest
import yaml

from drfer.config_schema import (
    DrferConfig,
    MiningMode,
    apply_overrides,
    get_config_summary,
    load_and_validate_config,
)
from drfer.errors import ConfigurationError


def test_defaults():
    """Defaults describe the full-size model and the 10-fold protocol."""
    config = DrferConfig()
    assert config.geometry.input_points == config.network.branch.input_points == 2048
    assert config.network.branch.level_widths[-1] == 1024
    assert config.loss.margin > 0
    assert config.loss.mining is MiningMode.BATCH_HARD
    assert config.eval.folds == 10
    assert config.eval.angles == [20.0, 40.0, 60.0, 80.0]


def test_load_valid_yaml(tmp_path, tiny_dict):
    config_file = tmp_path / "config.yaml"
    with open(config_file, "w") as f:
        yaml.dump(tiny_dict, f)

    config = load_and_validate_config(str(config_file))

    assert config.geometry.input_points == 64
    assert config.train.stage1.epochs == 2
    assert config.eval.folds == 3


def test_load_json_and_toml(tmp_path):
    json_file = tmp_path / "config.json"
    json_file.write_text(json.dumps({"train": {"seed": 5}}), encoding="utf-8")
    toml_file = tmp_path / "config.toml"
    toml_file.write_text('[train]\nseed = 6\n\n[loss]\nlambda = 0.25\n', encoding="utf-8")

    assert load_and_validate_config(json_file).train.seed == 5
    config = load_and_validate_config(toml_file)
    assert config.train.seed == 6
    assert config.loss.lam == 0.25


def test_load_missing_config():
    """A missing file falls back to the defaults."""
    config = load_and_validate_config("nonexistent.yaml")

    assert isinstance(config, DrferConfig)
    assert config.train.seed == DrferConfig().train.seed


def test_overrides_and_seed_win(tiny_config_file):
    config = load_and_validate_config(
        tiny_config_file,
        overrides=["train.stage1.epochs=5", "loss.use_triplet=false", "loss.lambda=0.5"],
        seed=99,
    )
    assert config.train.stage1.epochs == 5
    assert config.loss.use_triplet is False
    assert config.loss.lam == 0.5
    assert config.train.seed == 99


@pytest.mark.parametrize("item", ["train.seed", "=3", "train.seed=[1", "train.seed.x=1"])
def test_malformed_override(item):
    with pytest.raises(ConfigurationError):
        apply_overrides({"train": {"seed": 1}}, [item])


def test_override_creates_sections():
    assert apply_overrides({}, ["eval.folds=4"]) == {"eval": {"folds": 4}}


@pytest.mark.parametrize(
    "section,values,match",
    [
        ("geometry", {"input_points": 8192}, "template"),
        ("loss", {"use_kl": True, "use_js": True}, "mutually exclusive"),
        ("eval", {"angles": [90.0]}, r"\(0, 90\)"),
        ("train", {"stage2": {"learning_rate": 1.0, "batch_size": 4, "epochs": 1}}, "decrease"),
        ("logging", {"level": "INVALID"}, "log level"),
    ],
)
def test_invalid_values(section, values, match):
    with pytest.raises(ValueError, match=match):
        DrferConfig(**{section: values})


def test_invalid_file_raises_configuration_error(tmp_path):
    config_file = tmp_path / "config.yaml"
    config_file.write_text("eval:\n  folds: 1\n", encoding="utf-8")
    with pytest.raises(ConfigurationError, match="eval.folds"):
        load_and_validate_config(config_file)


def test_unknown_key_rejected():
    with pytest.raises(ValueError):
        DrferConfig(train={"sead": 3})


def test_non_mapping_root(tmp_path):
    config_file = tmp_path / "config.yaml"
    config_file.write_text("- 1\n- 2\n", encoding="utf-8")
    with pytest.raises(ConfigurationError, match="mapping"):
        load_and_validate_config(config_file)


def test_network_must_match_geometry(tiny_dict):
    tiny_dict["geometry"]["input_points"] = 128
    with pytest.raises(ValueError, match="input_points"):
        DrferConfig(**tiny_dict)


def test_branch_levels_validated(tiny_dict):
    tiny_dict["network"]["branch"]["levels"][1]["centroids"] = 32
    with pytest.raises(ValueError, match="strictly decrease"):
        DrferConfig(**tiny_dict)


def test_env_override_log_level(monkeypatch):
    monkeypatch.setenv("DRFER_LOG_LEVEL", "debug")
    config = DrferConfig(logging={"level": "WARNING"})
    assert config.logging.level == "DEBUG"


def test_summary_is_plain_data(tiny_config):
    summary = get_config_summary(tiny_config)
    assert summary["loss"]["lambda"] == tiny_config.loss.lam
    assert "log_file" not in summary["logging"]
    json.dumps(summary)
