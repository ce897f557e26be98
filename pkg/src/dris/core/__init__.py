# Copyright (c) 2025 DR-IS contributors
# SPDX-License-Identifier: MIT

"""Core numerics for dris: data, learners, scores, sampling, certificates and the harness."""

from .config import DrisConfig, ExperimentConfig
from .errors import DrisError
from .harness import run_experiment, sweep
from .models import LabeledDataset, Method, ObservedData, RankMatrix, SamplingPlan, ScoreVector


__all__ = [
    "DrisConfig",
    "DrisError",
    "ExperimentConfig",
    "LabeledDataset",
    "Method",
    "ObservedData",
    "RankMatrix",
    "SamplingPlan",
    "ScoreVector",
    "run_experiment",
    "sweep",
]
