# Copyright (c) 2025 DR-IS contributors
# SPDX-License-Identifier: MIT

"""Pytest fixtures for dris tests."""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np
import pytest


@pytest.fixture(autouse=True)
def clean_env(monkeypatch: pytest.MonkeyPatch, tmp_path: Path) -> None:
    """Clear DRIS_* env vars and reset config module state before each test."""
    for key in list(os.environ.keys()):
        if key.startswith("DRIS_"):
            monkeypatch.delenv(key, raising=False)

    # keep the per-user config dir out of reach
    monkeypatch.setenv("XDG_CONFIG_HOME", str(tmp_path / "xdg"))

    import dris.core.config as config_module

    monkeypatch.setattr(config_module, "_config_file_path", None)


@pytest.fixture
def tiny_config_toml() -> str:
    """Small synthetic experiment that trains in well under a second per seed."""
    return """
schema_version = 1

[experiment]
method = "dris-static"
proxies = 3
alpha = 0.5
seeds = [0, 1]
histogram_bins = 10

[experiment.dataset]
source = "synthetic"
n = 120
d = 4
test_n = 200
var_rare = 4.0
center_distance = 6.0

[experiment.noise]
kind = "uniform"
rate = 0.1

[experiment.proxy_train]
epochs = 4
batch_size = 16
lr = 0.05

[experiment.target_train]
epochs = 4
batch_size = 16
lr = 0.05
"""


@pytest.fixture
def config_file(tmp_path: Path, tiny_config_toml: str) -> Path:
    """Temporary config file with the tiny experiment."""
    config_path = tmp_path / "dris.toml"
    config_path.write_text(tiny_config_toml)
    return config_path


@pytest.fixture
def tiny_experiment(tiny_config_toml: str):
    """The tiny experiment as a validated ExperimentConfig."""
    import tomllib

    from dris.core.config import ExperimentConfig

    return ExperimentConfig.model_validate(tomllib.loads(tiny_config_toml)["experiment"])


@pytest.fixture
def blobs():
    """Two well-separated Gaussian blobs, 3 features, clean labels."""
    from dris.core.models import LabeledDataset

    rng = np.random.default_rng(7)
    n = 80
    labels = np.arange(n) % 2
    features = rng.normal(size=(n, 3)) + 3.0 * labels[:, None]
    return LabeledDataset.clean(features, labels, num_classes=2)
