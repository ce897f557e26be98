# Copyright (c) 2025 DR-IS contributors
# SPDX-License-Identifier: MIT

"""Configuration system for dris.

Supports:
- TOML experiment files (./dris.toml or ~/.config/dris/config.toml)
- Environment variable overrides (DRIS_* prefix, ``__`` for nesting)
- A versioned schema so stale files fail loudly
"""

from __future__ import annotations

import os
from pathlib import Path
import tomllib
from typing import TYPE_CHECKING, Any, Literal

from platformdirs import user_config_path
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator
from pydantic_settings import BaseSettings, PydanticBaseSettingsSource, SettingsConfigDict
import tomli_w

from .errors import ConfigError
from .models import Method, ModelKind, ModelSpec, NoiseKind, Schedule, SyntheticSpec, TrainConfig


if TYPE_CHECKING:
    from pydantic.fields import FieldInfo

# Module-level variable to hold the config file path for settings source
_config_file_path: Path | None = None

SCHEMA_VERSION = 1
LOCAL_CONFIG_NAME = "dris.toml"

# Methods whose scores need at least two proxies
_RANK_METHODS = frozenset({Method.DRIS_STATIC, Method.DRIS_ONLINE, Method.HYBRID})


class TomlFileSettingsSource(PydanticBaseSettingsSource):
    """Settings source that reads the TOML file selected by load_config."""

    def __init__(self, settings_cls: type[BaseSettings]) -> None:
        """Load the TOML file if a path is set."""
        super().__init__(settings_cls)
        self._data: dict[str, Any] = {}
        if _config_file_path is not None:
            self._data = _load_toml_raw(_config_file_path)

    def get_field_value(self, field: FieldInfo, field_name: str) -> tuple[Any, str, bool]:
        """Return field value from loaded TOML data."""
        value = self._data.get(field_name)
        return value, field_name, value is not None

    def __call__(self) -> dict[str, Any]:
        """Return all loaded TOML data."""
        return self._data


def _load_toml_raw(path: Path) -> dict[str, Any]:
    """Load TOML file, returning empty dict if not found."""
    try:
        with path.open("rb") as f:
            return tomllib.load(f)
    except FileNotFoundError:
        return {}
    except tomllib.TOMLDecodeError as e:
        msg = f"TOML parse error in {path}: {e}"
        raise ConfigError(msg) from None


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", use_enum_values=False)


class DatasetConfig(_Section):
    """Where the training (and test) data comes from."""

    source: Literal["synthetic", "csv", "idx-pair"] = "synthetic"

    # synthetic mixture
    n: int = 2000
    d: int = 20
    rare_ratio: float = 0.1
    var_rare: float = 400.0
    var_common: float = 1.0
    center_distance: float = 10.0
    test_n: int = 2000

    # files
    path: Path | None = None
    labels_path: Path | None = None
    header: bool = False
    num_classes: int | None = None
    scale: float = 1.0
    test_path: Path | None = None
    test_labels_path: Path | None = None
    test_fraction: float = 0.2

    @model_validator(mode="after")
    def _check_source(self) -> DatasetConfig:
        if self.source != "synthetic" and self.path is None:
            msg = f"dataset.path is required for source '{self.source}'"
            raise ValueError(msg)
        if self.source == "idx-pair" and self.labels_path is None:
            msg = "dataset.labels_path is required for source 'idx-pair'"
            raise ValueError(msg)
        if not 0 < self.test_fraction < 1:
            msg = f"dataset.test_fraction must be in (0, 1), got {self.test_fraction}"
            raise ValueError(msg)
        return self

    def synthetic_spec(self, seed: int, *, n: int | None = None) -> SyntheticSpec:
        """Mixture parameters for the training (or, with ``n``, test) draw."""
        return SyntheticSpec(
            n=self.n if n is None else n,
            d=self.d,
            rare_ratio=self.rare_ratio,
            var_rare=self.var_rare,
            var_common=self.var_common,
            seed=seed,
            center_distance=self.center_distance,
        )


class NoiseConfig(_Section):
    """Label corruption applied to the training split."""

    kind: NoiseKind = NoiseKind.NONE
    rate: float = 0.0

    @field_validator("rate")
    @classmethod
    def _check_rate(cls, v: float) -> float:
        if not 0 <= v < 1:
            msg = f"noise.rate must be in [0, 1), got {v}"
            raise ValueError(msg)
        return v


class ModelConfig(_Section):
    """Architecture of a proxy or target model."""

    kind: ModelKind = ModelKind.LINEAR_SQUARED_HINGE
    hidden_width: int = 0
    l2_lambda: float = 0.1

    def to_spec(self, input_dim: int, num_classes: int) -> ModelSpec:
        """Bind the architecture to a dataset's shape."""
        return ModelSpec(self.kind, input_dim, num_classes, self.hidden_width, self.l2_lambda)


class TrainingConfig(_Section):
    """SGD hyperparameters without the seed (seeds come from the experiment)."""

    epochs: int = 200
    batch_size: int = 32
    lr: float = 0.01
    schedule: Schedule = Schedule.DECREASING_CLAMPED
    momentum: float = 0.0
    weight_decay: float = 0.0

    def to_train_config(self, seed: int, *, epochs: int | None = None) -> TrainConfig:
        """Bind a seed (and optionally override the epoch count)."""
        return TrainConfig(
            epochs=self.epochs if epochs is None else epochs,
            batch_size=self.batch_size,
            lr=self.lr,
            schedule=self.schedule,
            momentum=self.momentum,
            weight_decay=self.weight_decay,
            seed=seed,
        )


class ExperimentConfig(_Section):
    """One experiment cell: data, noise, method, proxies and target."""

    dataset: DatasetConfig = Field(default_factory=DatasetConfig)
    noise: NoiseConfig = Field(default_factory=NoiseConfig)
    method: Method = Method.DRIS_STATIC
    proxies: int = 4
    proxy_model: ModelConfig = Field(default_factory=ModelConfig)
    proxy_train: TrainingConfig = Field(default_factory=lambda: TrainingConfig(epochs=40))
    snapshot_epoch: int | None = None
    target_model: ModelConfig = Field(default_factory=ModelConfig)
    target_train: TrainingConfig = Field(default_factory=TrainingConfig)
    alpha: float = 0.5
    xi: float = 0.1
    beta: float = 0.5
    mix_k: float = 0.5
    seeds: list[int] = Field(default_factory=lambda: [0])
    histogram_bins: int = 50
    boundary_fraction: float = 0.1
    delta: float = 0.05
    workers: int = 1

    @model_validator(mode="after")
    def _check_ranges(self) -> ExperimentConfig:
        problems: list[str] = []
        if not self.seeds:
            problems.append("seeds must be nonempty")
        if any(s < 0 for s in self.seeds):
            problems.append("seeds must be nonnegative")
        if self.proxies < 1:
            problems.append(f"proxies must be >= 1, got {self.proxies}")
        if self.method in _RANK_METHODS and self.proxies < 2:  # noqa: PLR2004
            problems.append(f"method {self.method} needs proxies >= 2 for rank variance")
        if not 0 < self.alpha <= 1:
            problems.append(f"alpha must be in (0, 1], got {self.alpha}")
        if not self.xi > 0:
            problems.append(f"xi must be > 0, got {self.xi}")
        if not 0 <= self.beta <= 1:
            problems.append(f"beta must be in [0, 1], got {self.beta}")
        if not 0 <= self.mix_k <= 1:
            problems.append(f"mix_k must be in [0, 1], got {self.mix_k}")
        if self.histogram_bins < 2:  # noqa: PLR2004
            problems.append(f"histogram_bins must be >= 2, got {self.histogram_bins}")
        if not 0 < self.boundary_fraction <= 1:
            problems.append(f"boundary_fraction must be in (0, 1], got {self.boundary_fraction}")
        if not 0 < self.delta < 1:
            problems.append(f"delta must be in (0, 1), got {self.delta}")
        if self.workers < 1:
            problems.append(f"workers must be >= 1, got {self.workers}")
        if self.snapshot_epoch is not None and not 1 <= self.snapshot_epoch <= self.proxy_train.epochs:
            problems.append(f"snapshot_epoch must be in [1, {self.proxy_train.epochs}]")
        if self.noise.kind is NoiseKind.NONE and self.noise.rate > 0:
            problems.append("noise.rate > 0 requires noise.kind uniform or targeted")
        if problems:
            raise ValueError("; ".join(problems))
        return self

    @property
    def resolved_snapshot_epoch(self) -> int:
        """Proxy epoch at which ranks are read (mid-training by default)."""
        if self.snapshot_epoch is not None:
            return self.snapshot_epoch
        return max(1, self.proxy_train.epochs // 2)


class DrisConfig(BaseSettings):
    """Top-level dris configuration.

    Supports loading from:
    1. TOML config file
    2. Environment variables (DRIS_* prefix)
    3. Programmatic overrides

    Priority (highest first): overrides > env vars > TOML file > defaults
    """

    schema_version: int = SCHEMA_VERSION
    output_dir: Path = Path("runs")
    experiment: ExperimentConfig = Field(default_factory=ExperimentConfig)

    model_config = SettingsConfigDict(env_prefix="DRIS_", env_nested_delimiter="__", extra="forbid")

    @classmethod
    def settings_customise_sources(
        cls,
        settings_cls: type[BaseSettings],
        init_settings: PydanticBaseSettingsSource,
        env_settings: PydanticBaseSettingsSource,
        dotenv_settings: PydanticBaseSettingsSource,  # noqa: ARG003
        file_secret_settings: PydanticBaseSettingsSource,  # noqa: ARG003
    ) -> tuple[PydanticBaseSettingsSource, ...]:
        """Order sources: init, then environment, then the TOML file."""
        return (init_settings, env_settings, TomlFileSettingsSource(settings_cls))

    def save(self, path: Path) -> None:
        """Save configuration to a TOML file.

        Args:
            path: Path to save the config file.
        """
        path.parent.mkdir(parents=True, exist_ok=True)
        data = self.model_dump(mode="json", exclude_none=True)
        with path.open("wb") as f:
            tomli_w.dump(data, f)


def get_default_config_path() -> Path:
    """Per-user config file location (platformdirs)."""
    return user_config_path("dris") / "config.toml"


def get_config_path(explicit: Path | None = None) -> Path:
    """Resolve the config file path.

    Resolution order:
    1. explicit path (``--config``)
    2. DRIS_CONFIG env var
    3. ./dris.toml if it exists
    4. the per-user config path (even if it does not exist)

    Returns:
        Path to the config file to use.
    """
    if explicit is not None:
        return explicit
    if env_path := os.environ.get("DRIS_CONFIG"):
        return Path(env_path)
    local = Path.cwd() / LOCAL_CONFIG_NAME
    if local.exists():
        return local
    return get_default_config_path()


def load_config(path: Path | None = None, *, required: bool = False) -> DrisConfig:
    """Load configuration from file and environment.

    Args:
        path: Config file; if None, resolved with get_config_path().
        required: Raise when the resolved file does not exist.

    Returns:
        Loaded DrisConfig instance.

    Raises:
        ConfigError: If the file is required but missing, unparsable, has the
            wrong schema_version or fails validation.
    """
    global _config_file_path  # noqa: PLW0603 - required for pydantic-settings file source
    resolved = get_config_path(path)
    if not resolved.exists() and (required or path is not None):
        msg = f"config file not found: {resolved}"
        raise ConfigError(msg)
    _config_file_path = resolved

    try:
        config = DrisConfig()
    except ValidationError as e:
        msg = f"invalid config {resolved}:\n{e}"
        raise ConfigError(msg) from None

    if config.schema_version != SCHEMA_VERSION:
        msg = f"config schema_version {config.schema_version} is not supported (expected {SCHEMA_VERSION})"
        raise ConfigError(msg)
    return config


def validate_config(path: Path) -> list[str]:
    """Validate a config file without loading the environment.

    Args:
        path: Path to the config file to validate.

    Returns:
        List of error messages. Empty list means valid.
    """
    if not path.exists():
        return [f"Config file not found: {path}"]

    try:
        with path.open("rb") as f:
            data = tomllib.load(f)
    except tomllib.TOMLDecodeError as e:
        return [f"TOML parse error: {e}"]

    errors: list[str] = []
    version = data.get("schema_version")
    if version is None:
        errors.append("missing schema_version")
    elif version != SCHEMA_VERSION:
        errors.append(f"schema_version {version} is not supported (expected {SCHEMA_VERSION})")

    unknown = sorted(set(data) - set(DrisConfig.model_fields))
    errors.extend(f"unknown top-level key '{key}'" for key in unknown)

    try:
        ExperimentConfig.model_validate(data.get("experiment", {}))
    except ValidationError as e:
        for err in e.errors():
            where = ".".join(str(p) for p in err["loc"])
            errors.append(f"experiment.{where}: {err['msg']}" if where else f"experiment: {err['msg']}")
    return errors
