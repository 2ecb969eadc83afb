"""Configuration schema validation for drfer.

Pydantic models for every config section with clear error messages. Files may
be YAML, JSON or TOML; ``--set key=value`` overrides are applied on top of the
file, and the file on top of the defaults below.
"""

from __future__ import annotations

import json
import os
import sys
from enum import Enum
from pathlib import Path
from typing import Any

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .errors import ConfigurationError
from .utils.logger import get_logger

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

logger = get_logger(__name__)

DEFAULT_SEED = 20240607
LOG_LEVEL_ENV = "DRFER_LOG_LEVEL"


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)


class LoggingConfig(_Section):
    """Logging configuration."""
    level: str = Field(default="INFO", description="Logging level")
    format: str = Field(default="text", description="Console format: 'text' or 'json'")
    log_file: str | None = Field(
        default=None, description="JSON-lines log file; defaults to <out>/logs/drfer.jsonl"
    )
    colored_console: bool = Field(default=True)
    console_output: bool = Field(default=True)

    @field_validator("level")
    @classmethod
    def validate_level(cls, v: str) -> str:
        valid_levels = ["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"]
        v_upper = v.upper()
        if v_upper not in valid_levels:
            raise ValueError(f"Invalid log level: {v}. Must be one of: {', '.join(valid_levels)}")
        return v_upper

    @field_validator("format")
    @classmethod
    def validate_format(cls, v: str) -> str:
        if v not in ("json", "text"):
            raise ValueError(f"Invalid log format: {v}. Must be 'json' or 'text'")
        return v

    @model_validator(mode="after")
    def override_from_env(self):
        env_level = os.getenv(LOG_LEVEL_ENV)
        if env_level and env_level.upper() != self.level:
            object.__setattr__(self, "level", self.validate_level(env_level))
        return self


class GeometryConfig(_Section):
    """Geometry kernels and preprocessing."""
    template_points: int = Field(default=4096, ge=8, description="Canonical template size")
    input_points: int = Field(default=2048, ge=4, description="Network input size after FPS")
    icp_max_iters: int = Field(default=50, ge=1, le=10000)
    icp_tol: float = Field(default=1e-8, gt=0.0)
    hpr_gamma: float = Field(default=3.0, gt=1.0, description="Spherical flip radius multiplier")
    viewpoint_factor: float = Field(
        default=5.0, gt=1.0, description="Viewpoint distance in bounding radii"
    )

    @model_validator(mode="after")
    def check_sizes(self):
        if self.input_points > self.template_points:
            raise ValueError(
                f"geometry.input_points ({self.input_points}) exceeds "
                f"geometry.template_points ({self.template_points})"
            )
        return self


class SynthConfig(_Section):
    """Synthetic face generator."""
    subjects: int = Field(default=30, ge=2)
    expressions: int = Field(default=6, ge=1, le=6)
    intensities: list[float] = Field(default_factory=lambda: [0.7, 1.0])
    identity_components: int = Field(default=8, ge=1)
    expression_components: int = Field(default=6, ge=1)
    identity_scale: float = Field(default=4.0, ge=0.0, description="mm")
    expression_scale: float = Field(default=3.0, ge=0.0, description="mm")
    noise_sigma: float = Field(default=0.3, ge=0.0, description="mm")
    expression_jitter: float = Field(default=0.15, ge=0.0, le=1.0)

    @field_validator("intensities")
    @classmethod
    def validate_intensities(cls, v: list[float]) -> list[float]:
        if not v:
            raise ValueError("synth.intensities cannot be empty")
        if any(not 0.0 <= t <= 1.0 for t in v):
            raise ValueError("synth.intensities must lie in [0, 1]")
        return v


class AugmentConfig(_Section):
    """Input augmentation, applied after FPS."""
    enabled: bool = Field(default=True)
    dropout_rate: float = Field(default=0.875, ge=0.0, le=0.875)
    scale_low: float = Field(default=0.8, ge=0.8, le=1.25)
    scale_high: float = Field(default=1.25, ge=0.8, le=1.25)

    @model_validator(mode="after")
    def check_range(self):
        if self.scale_low > self.scale_high:
            raise ValueError("augment.scale_low must not exceed augment.scale_high")
        return self


class MiningMode(str, Enum):
    BATCH_HARD = "batch_hard"
    BATCH_ALL = "batch_all"


class LossConfig(_Section):
    """Loss weights and ablation toggles."""
    model_config = ConfigDict(extra="forbid", validate_assignment=True, populate_by_name=True)

    margin: float = Field(default=0.3, gt=0.0, description="Triplet margin alpha")
    lam: float = Field(
        default=0.1, ge=0.0, alias="lambda", description="Weight of L_rec^ori in stage 3"
    )
    use_triplet: bool = Field(default=True)
    use_cls: bool = Field(default=True)
    use_kl: bool = Field(default=False)
    use_js: bool = Field(default=False)
    mining: MiningMode = Field(default=MiningMode.BATCH_HARD)
    recon_unit_mm: float = Field(
        default=10.0, gt=0.0, description="Length unit for Chamfer terms during training"
    )
    triplet_normalize: bool = Field(default=True, description="L2-normalise triplet features")
    distribution_weight: float = Field(default=1.0, ge=0.0)

    @model_validator(mode="after")
    def check_distribution_toggles(self):
        if self.use_kl and self.use_js:
            raise ValueError("loss.use_kl and loss.use_js are mutually exclusive")
        return self


class SetAbstractionLevel(_Section):
    """One set-abstraction level."""
    centroids: int = Field(..., ge=1)
    radius: float | None = Field(
        default=None, gt=0.0, description="Ball radius in normalized units; null groups all"
    )
    cap: int = Field(..., ge=1, description="Neighbours per centroid")
    mlp: list[int] = Field(..., min_length=1, description="Pointwise layer widths")


def _default_levels() -> list[SetAbstractionLevel]:
    return [
        SetAbstractionLevel(centroids=512, radius=0.2, cap=32, mlp=[64, 64, 128]),
        SetAbstractionLevel(centroids=128, radius=0.4, cap=64, mlp=[128, 128, 256]),
        SetAbstractionLevel(centroids=1, radius=None, cap=128, mlp=[256, 512, 1024]),
    ]


LATENT_WIDTH = 1024


class BranchParams(_Section):
    """Encoder/decoder shape shared by both branches."""
    input_points: int = Field(default=2048, ge=4)
    levels: list[SetAbstractionLevel] = Field(default_factory=_default_levels)
    decoder_widths: list[int] = Field(default_factory=lambda: [1024, 2048])
    output_points: int = Field(default=2048, ge=1)

    @model_validator(mode="after")
    def check_levels(self):
        if len(self.levels) != 3:
            raise ValueError(
                f"Encoder needs exactly 3 set-abstraction levels, got {len(self.levels)}"
            )
        counts = [lv.centroids for lv in self.levels]
        if any(a <= b for a, b in zip(counts, counts[1:])):
            raise ValueError(f"Centroid counts must strictly decrease, got {counts}")
        if counts[0] > self.input_points:
            raise ValueError("First-level centroid count exceeds input_points")
        if self.levels[-1].mlp[-1] != LATENT_WIDTH:
            raise ValueError(f"Final encoder width must be {LATENT_WIDTH}")
        return self

    @property
    def level_widths(self) -> list[int]:
        return [lv.mlp[-1] for lv in self.levels]


class FusionParams(_Section):
    """Fusion module: two role-specific stems and a skip-connected trunk."""
    enabled: bool = Field(default=True, description="False runs the 'w/o fusion' ablation")
    skip_connections: bool = Field(default=True)
    trunk_widths: list[int] = Field(default_factory=lambda: [1024, 1024, 2048])

    @field_validator("trunk_widths")
    @classmethod
    def validate_trunk(cls, v: list[int]) -> list[int]:
        if len(v) != 3:
            raise ValueError("fusion.trunk_widths needs one width per set-abstraction level (3)")
        if any(w < 1 for w in v):
            raise ValueError("fusion.trunk_widths must be positive")
        return v


class HeadParams(_Section):
    """Classifier head."""
    hidden: list[int] = Field(default_factory=lambda: [512, 256])
    dropout: float = Field(default=0.4, ge=0.0, lt=1.0)


class NetworkConfig(_Section):
    branch: BranchParams = Field(default_factory=BranchParams)
    fusion: FusionParams = Field(default_factory=FusionParams)
    head: HeadParams = Field(default_factory=HeadParams)


class StageSchedule(_Section):
    learning_rate: float = Field(..., gt=0.0)
    batch_size: int = Field(..., ge=1)
    epochs: int = Field(..., ge=0)


class TrainConfig(_Section):
    """Three-stage optimisation schedule."""
    stage1: StageSchedule = Field(
        default_factory=lambda: StageSchedule(learning_rate=1e-3, batch_size=24, epochs=40)
    )
    stage2: StageSchedule = Field(
        default_factory=lambda: StageSchedule(learning_rate=1e-4, batch_size=24, epochs=40)
    )
    stage3: StageSchedule = Field(
        default_factory=lambda: StageSchedule(learning_rate=1e-5, batch_size=16, epochs=20)
    )
    betas: tuple[float, float] = Field(default=(0.9, 0.999))
    seed: int = Field(default=DEFAULT_SEED, ge=0)
    deterministic: bool = Field(default=True)
    augment: AugmentConfig = Field(default_factory=AugmentConfig)
    test_fold: int = Field(default=0, ge=0, description="Held-out fold for single-run training")

    @field_validator("betas")
    @classmethod
    def validate_betas(cls, v: tuple[float, float]) -> tuple[float, float]:
        if not all(0.0 <= b < 1.0 for b in v):
            raise ValueError(f"Adam betas must lie in [0, 1), got {v}")
        return v

    @model_validator(mode="after")
    def check_learning_rates(self):
        rates = [self.stage1.learning_rate, self.stage2.learning_rate, self.stage3.learning_rate]
        if not rates[0] > rates[1] > rates[2]:
            raise ValueError(f"Stage learning rates must strictly decrease, got {rates}")
        return self

    def schedule(self, stage: int) -> StageSchedule:
        return {1: self.stage1, 2: self.stage2, 3: self.stage3}[stage]


class ProjectionMethod(str, Enum):
    LINEAR = "linear"
    TSNE = "tsne"


class EvalConfig(_Section):
    """Cross-validation, robustness and probe settings."""
    folds: int = Field(default=10, ge=2)
    repeats: int = Field(default=1, ge=1)
    angles: list[float] = Field(default_factory=lambda: [20.0, 40.0, 60.0, 80.0])
    probes: bool = Field(default=True, description="Run disentanglement probes per fold")
    embedding_method: ProjectionMethod = Field(default=ProjectionMethod.LINEAR)
    tsne_perplexity: float = Field(default=30.0, gt=0.0)
    batch_size: int = Field(default=32, ge=1)

    @field_validator("angles")
    @classmethod
    def validate_angles(cls, v: list[float]) -> list[float]:
        if not v or any(a <= 0 or a >= 90 for a in v):
            raise ValueError("eval.angles must be non-empty magnitudes in (0, 90)")
        return sorted(set(v))


class DrferConfig(_Section):
    """Complete drfer configuration."""
    logging: LoggingConfig = Field(default_factory=LoggingConfig)
    geometry: GeometryConfig = Field(default_factory=GeometryConfig)
    synth: SynthConfig = Field(default_factory=SynthConfig)
    network: NetworkConfig = Field(default_factory=NetworkConfig)
    loss: LossConfig = Field(default_factory=LossConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    eval: EvalConfig = Field(default_factory=EvalConfig)

    @model_validator(mode="after")
    def check_network_matches_geometry(self):
        if self.network.branch.input_points != self.geometry.input_points:
            raise ValueError(
                f"network.branch.input_points ({self.network.branch.input_points}) must equal "
                f"geometry.input_points ({self.geometry.input_points})"
            )
        return self


def _read_config_file(config_file: Path) -> dict[str, Any]:
    suffix = config_file.suffix.lower()
    if suffix == ".json":
        with open(config_file, encoding="utf-8") as f:
            return json.load(f) or {}
    if suffix == ".toml":
        with open(config_file, "rb") as f:
            return tomllib.load(f)
    with open(config_file, encoding="utf-8") as f:
        return yaml.safe_load(f) or {}


def apply_overrides(
    config_dict: dict[str, Any], overrides: list[str] | tuple[str, ...]
) -> dict[str, Any]:
    """Apply ``key.path=value`` overrides; values are parsed as YAML scalars.

    Args:
        config_dict: Raw configuration mapping (modified in place)
        overrides: Items like ``train.seed=3`` or ``loss.use_triplet=false``

    Returns:
        The updated mapping

    Raises:
        ConfigurationError: Malformed override
    """
    for item in overrides:
        if "=" not in item:
            raise ConfigurationError(f"Override '{item}' must look like key.path=value")
        key, raw_value = item.split("=", 1)
        parts = [p for p in key.strip().split(".") if p]
        if not parts:
            raise ConfigurationError(f"Override '{item}' has an empty key")
        try:
            value = yaml.safe_load(raw_value) if raw_value.strip() else None
        except yaml.YAMLError as e:
            raise ConfigurationError(f"Cannot parse value of override '{item}': {e}") from e
        node = config_dict
        for part in parts[:-1]:
            child = node.get(part)
            if child is None:
                child = node[part] = {}
            elif not isinstance(child, dict):
                raise ConfigurationError(f"Override '{item}': '{part}' is not a section")
            node = child
        node[parts[-1]] = value
        logger.debug(f"Config override {key}={value!r}")
    return config_dict


def load_and_validate_config(
    config_path: str | Path | None = "config.yaml",
    overrides: list[str] | tuple[str, ...] = (),
    seed: int | None = None,
) -> DrferConfig:
    """Load configuration from YAML/JSON/TOML and validate it.

    Precedence is overrides and ``seed`` > file > defaults. A missing file
    logs a warning and yields the defaults.

    Args:
        config_path: Path to the config file, or None for defaults
        overrides: ``key.path=value`` strings
        seed: Replaces ``train.seed`` when given

    Returns:
        Validated DrferConfig instance

    Raises:
        ConfigurationError: If configuration is invalid
    """
    config_dict: dict[str, Any] = {}
    if config_path is not None:
        config_file = Path(config_path)
        if not config_file.exists():
            logger.warning(f"Config file not found: {config_path}, using defaults")
        else:
            try:
                config_dict = _read_config_file(config_file)
            except (OSError, ValueError, yaml.YAMLError, tomllib.TOMLDecodeError) as e:
                raise ConfigurationError(f"Cannot read configuration {config_path}: {e}") from e
            logger.info(f"Loading configuration from: {config_path}")
    if not isinstance(config_dict, dict):
        raise ConfigurationError(f"Configuration root in {config_path} must be a mapping")

    apply_overrides(config_dict, list(overrides))
    if seed is not None:
        config_dict.setdefault("train", {})["seed"] = seed

    try:
        config = DrferConfig(**config_dict)
    except ValidationError as e:
        logger.error(f"Configuration validation failed: {e}")
        raise ConfigurationError(
            f"Invalid configuration in {config_path or '<defaults>'}:\n{e}\n\n"
            f"Please check the file against config.yaml."
        ) from e
    logger.debug("Configuration validated successfully")
    return config


def get_config_summary(config: DrferConfig) -> dict[str, Any]:
    """Full configuration as plain JSON-compatible data, for run manifests."""
    data = config.model_dump(mode="json", by_alias=True)
    data["logging"].pop("log_file", None)
    return data
