# tests/conftest.py
from __future__ import annotations

import copy
import os
import sys
from pathlib import Path

import numpy as np
import pytest
import yaml

# Ensure the project root is on sys.path so the drfer package can be imported
PROJECT_ROOT = Path(__file__).resolve().parent.parent
if str(PROJECT_ROOT) not in sys.path:
    sys.path.insert(0, str(PROJECT_ROOT))

from drfer.config_schema import DrferConfig  # noqa: E402
from drfer.data.synth import build_synth_model, synth_generate  # noqa: E402

# Small enough to train every stage on CPU in a few seconds.
TINY_CONFIG: dict = {
    "logging": {"level": "WARNING", "colored_console": False},
    "geometry": {"template_points": 256, "input_points": 64},
    "synth": {
        "subjects": 6,
        "expressions": 6,
        "intensities": [0.7, 1.0],
        "noise_sigma": 0.1,
        "expression_jitter": 0.0,
    },
    "network": {
        "branch": {
            "input_points": 64,
            "levels": [
                {"centroids": 16, "radius": 0.4, "cap": 8, "mlp": [16, 16, 32]},
                {"centroids": 8, "radius": 0.8, "cap": 8, "mlp": [32, 32, 64]},
                {"centroids": 1, "radius": None, "cap": 8, "mlp": [64, 128, 1024]},
            ],
            "decoder_widths": [64, 128],
            "output_points": 64,
        },
        "fusion": {"trunk_widths": [64, 64, 128]},
        "head": {"hidden": [32, 16], "dropout": 0.0},
    },
    "train": {
        "stage1": {"learning_rate": 1.0e-3, "batch_size": 12, "epochs": 2},
        "stage2": {"learning_rate": 5.0e-4, "batch_size": 12, "epochs": 1},
        "stage3": {"learning_rate": 1.0e-4, "batch_size": 12, "epochs": 1},
        "seed": 7,
    },
    "eval": {"folds": 3, "probes": False, "batch_size": 64},
}


@pytest.fixture(autouse=True, scope="session")
def _offline_env():
    # Deterministic, single-threaded, uncolored test runs
    os.environ.setdefault("NO_COLOR", "1")
    os.environ["DRFER_THREADS"] = "1"
    os.environ.pop("DRFER_LOG_LEVEL", None)


@pytest.fixture
def tiny_dict() -> dict:
    return copy.deepcopy(TINY_CONFIG)


@pytest.fixture
def tiny_config(tiny_dict) -> DrferConfig:
    return DrferConfig(**tiny_dict)


@pytest.fixture
def tiny_config_file(tmp_path, tiny_dict) -> Path:
    path = tmp_path / "tiny.yaml"
    path.write_text(yaml.safe_dump(tiny_dict), encoding="utf-8")
    return path


@pytest.fixture(scope="session")
def tiny_synth_model():
    return build_synth_model(subjects=6, template_points=256, noise_sigma=0.1, seed=3)


@pytest.fixture(scope="session")
def tiny_dataset(tiny_synth_model):
    """6 subjects x 6 expressions x 2 intensities at 64 points, plus 6 neutrals."""
    return synth_generate(tiny_synth_model, 6, 6, [0.7, 1.0], 64, seed=11)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
