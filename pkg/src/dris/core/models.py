# Copyright (c) 2025 DR-IS contributors
# SPDX-License-Identifier: MIT

"""Domain models shared across dris.

This module contains the core data structures used throughout dris:
- LabeledDataset / ObservedData: training data with and without ground truth
- ModelSpec / TrainConfig / PerSampleStats: learners
- RankMatrix / ScoreVector: per-example scores
- SamplingPlan: static subsets and online importance-sampling plans
- Method / NoiseKind: experiment vocabulary
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import StrEnum

import numpy as np

from .errors import ParameterError


# Tolerances for invariants checked on construction
PROB_SUM_TOL = 1e-12
RANK_VARIANCE_MAX = 0.25
_BOUND_SLACK = 1e-12


def _require(condition: bool, msg: str) -> None:  # noqa: FBT001
    if not condition:
        raise ParameterError(msg)


# --- Data ---


@dataclass(frozen=True)
class SyntheticSpec:
    """Two-cluster Gaussian mixture: a common cluster plus a rare high-variance one."""

    n: int = 2000
    d: int = 20
    rare_ratio: float = 0.1
    var_rare: float = 400.0
    var_common: float = 1.0
    seed: int = 0
    center_distance: float = 10.0

    def __post_init__(self) -> None:
        """Validate ranges."""
        _require(self.n >= 2, f"n must be >= 2, got {self.n}")
        _require(self.d >= 1, f"d must be >= 1, got {self.d}")
        _require(0 < self.rare_ratio < 1, f"rare_ratio must be in (0, 1), got {self.rare_ratio}")
        _require(self.var_rare > 0, f"var_rare must be > 0, got {self.var_rare}")
        _require(self.var_common > 0, f"var_common must be > 0, got {self.var_common}")
        _require(self.seed >= 0, f"seed must be nonnegative, got {self.seed}")


@dataclass(frozen=True)
class ObservedData:
    """What training and scoring components may see: features and observed labels.

    Ground truth (clean labels, corruption mask) is deliberately absent.
    """

    features: np.ndarray
    labels: np.ndarray
    num_classes: int

    @property
    def n(self) -> int:
        """Number of examples."""
        return int(self.features.shape[0])

    @property
    def d(self) -> int:
        """Feature dimension."""
        return int(self.features.shape[1])

    def subset(self, indices: np.ndarray) -> ObservedData:
        """Rows ``indices`` as a new view."""
        return ObservedData(self.features[indices], self.labels[indices], self.num_classes)


@dataclass(frozen=True)
class LabeledDataset:
    """Dense features, observed labels and ground truth about corruption."""

    features: np.ndarray
    labels: np.ndarray
    clean_labels: np.ndarray
    corrupt_mask: np.ndarray
    num_classes: int

    def __post_init__(self) -> None:
        """Validate shapes, label range and the mask/label agreement."""
        features = np.ascontiguousarray(self.features, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        clean = np.asarray(self.clean_labels, dtype=np.int64)
        mask = np.asarray(self.corrupt_mask, dtype=bool)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "clean_labels", clean)
        object.__setattr__(self, "corrupt_mask", mask)

        _require(features.ndim == 2, f"features must be a 2-D matrix, got shape {features.shape}")  # noqa: PLR2004
        n = features.shape[0]
        _require(labels.shape == (n,), f"labels must have length {n}")
        _require(clean.shape == (n,), f"clean_labels must have length {n}")
        _require(mask.shape == (n,), f"corrupt_mask must have length {n}")
        _require(self.num_classes >= 1, f"num_classes must be positive, got {self.num_classes}")
        for name, values in (("labels", labels), ("clean_labels", clean)):
            if n and (values.min() < 0 or values.max() >= self.num_classes):
                msg = f"{name} must lie in [0, {self.num_classes})"
                raise ParameterError(msg)
        _require(bool(np.array_equal(mask, labels != clean)), "corrupt_mask must equal labels != clean_labels")

    @classmethod
    def clean(cls, features: np.ndarray, labels: np.ndarray, num_classes: int) -> LabeledDataset:
        """Build an uncorrupted dataset."""
        labels = np.asarray(labels, dtype=np.int64)
        return cls(features, labels, labels.copy(), np.zeros(labels.shape[0], dtype=bool), num_classes)

    @property
    def n(self) -> int:
        """Number of examples."""
        return int(self.features.shape[0])

    @property
    def d(self) -> int:
        """Feature dimension."""
        return int(self.features.shape[1])

    @property
    def epsilon(self) -> float:
        """Realized corruption rate."""
        return float(self.corrupt_mask.mean()) if self.n else 0.0

    @property
    def observed(self) -> ObservedData:
        """Features with the (possibly corrupted) labels, no ground truth."""
        return ObservedData(self.features, self.labels, self.num_classes)

    @property
    def clean_view(self) -> ObservedData:
        """Features with the clean labels (attacker training, test evaluation)."""
        return ObservedData(self.features, self.clean_labels, self.num_classes)

    def with_labels(self, labels: np.ndarray) -> LabeledDataset:
        """Same features and ground truth, new observed labels."""
        labels = np.asarray(labels, dtype=np.int64)
        return LabeledDataset(self.features, labels, self.clean_labels, labels != self.clean_labels, self.num_classes)

    def subset(self, indices: np.ndarray) -> LabeledDataset:
        """Rows ``indices`` as a new dataset."""
        return LabeledDataset(
            self.features[indices],
            self.labels[indices],
            self.clean_labels[indices],
            self.corrupt_mask[indices],
            self.num_classes,
        )


# --- Learners ---


class ModelKind(StrEnum):
    """Supported proxy/target architectures."""

    LINEAR_SOFTMAX = "linear-softmax"
    LINEAR_SQUARED_HINGE = "linear-squared-hinge"
    MLP = "mlp-1hidden"

    @property
    def is_linear(self) -> bool:
        """Single affine layer."""
        return self is not ModelKind.MLP


class Schedule(StrEnum):
    """Learning-rate schedules."""

    CONSTANT = "constant"
    COSINE = "cosine"
    DECREASING_CLAMPED = "decreasing-clamped"


@dataclass(frozen=True)
class ModelSpec:
    """Architecture and regularization of a small differentiable model."""

    kind: ModelKind
    input_dim: int
    num_classes: int
    hidden_width: int = 0
    l2_lambda: float = 0.0

    def __post_init__(self) -> None:
        """Validate ranges."""
        object.__setattr__(self, "kind", ModelKind(self.kind))
        _require(self.input_dim >= 1, f"input_dim must be >= 1, got {self.input_dim}")
        _require(self.num_classes >= 2, f"num_classes must be >= 2, got {self.num_classes}")  # noqa: PLR2004
        _require(self.l2_lambda >= 0, f"l2_lambda must be >= 0, got {self.l2_lambda}")
        if self.kind is ModelKind.MLP:
            _require(self.hidden_width >= 1, f"hidden_width must be >= 1 for {self.kind}, got {self.hidden_width}")

    @property
    def num_params(self) -> int:
        """Length of the flat parameter vector."""
        d, c, h = self.input_dim, self.num_classes, self.hidden_width
        if self.kind.is_linear:
            return d * c + c
        return d * h + h + h * c + c


@dataclass(frozen=True)
class TrainConfig:
    """SGD hyperparameters."""

    epochs: int = 200
    batch_size: int = 32
    lr: float = 0.01
    schedule: Schedule = Schedule.DECREASING_CLAMPED
    momentum: float = 0.0
    weight_decay: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        """Validate ranges."""
        object.__setattr__(self, "schedule", Schedule(self.schedule))
        _require(self.epochs >= 1, f"epochs must be >= 1, got {self.epochs}")
        _require(self.batch_size >= 1, f"batch_size must be >= 1, got {self.batch_size}")
        _require(self.lr > 0, f"lr must be > 0, got {self.lr}")
        _require(0 <= self.momentum < 1, f"momentum must be in [0, 1), got {self.momentum}")
        _require(self.weight_decay >= 0, f"weight_decay must be >= 0, got {self.weight_decay}")
        _require(self.seed >= 0, f"seed must be nonnegative, got {self.seed}")


@dataclass(frozen=True)
class PerSampleStats:
    """Per-example statistics of a model on a dataset."""

    loss: np.ndarray
    margin: np.ndarray
    grad_norm: np.ndarray
    correct: np.ndarray

    def __len__(self) -> int:
        """Number of examples."""
        return int(self.loss.shape[0])


# --- Scores ---


class ScoreKind(StrEnum):
    """Per-example score families."""

    RANK_VARIANCE = "rank-variance"
    EL2N = "el2n"
    CONSENSUS_MEAN_RANK = "consensus-mean-rank"
    GRAD_NORM = "grad-norm"
    LOSS = "loss"
    FORGETTING = "forgetting"
    AUM = "aum"
    HYBRID = "hybrid"
    UNIFORM_MIX = "uniform-mix"


@dataclass(frozen=True)
class RankMatrix:
    """Normalized loss ranks, one column per proxy."""

    ranks: np.ndarray
    proxy_ids: tuple[str, ...]
    snapshot_epoch: int = 0

    def __post_init__(self) -> None:
        """Validate shape and range."""
        ranks = np.asarray(self.ranks, dtype=np.float64)
        object.__setattr__(self, "ranks", ranks)
        object.__setattr__(self, "proxy_ids", tuple(self.proxy_ids))
        _require(ranks.ndim == 2, f"ranks must be N x K, got shape {ranks.shape}")  # noqa: PLR2004
        _require(ranks.shape[1] == len(self.proxy_ids), "one proxy id per column required")
        _require(bool(np.all((ranks > 0) & (ranks <= 1))), "ranks must lie in (0, 1]")

    @property
    def n(self) -> int:
        """Number of examples."""
        return int(self.ranks.shape[0])

    @property
    def k(self) -> int:
        """Number of proxies."""
        return int(self.ranks.shape[1])


@dataclass(frozen=True)
class ScoreVector:
    """A per-example score tagged with how it was computed."""

    values: np.ndarray
    kind: ScoreKind
    parameter: float | None = None

    def __post_init__(self) -> None:
        """Validate finiteness and the rank-variance range."""
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "kind", ScoreKind(self.kind))
        _require(values.ndim == 1, "score values must be a vector")
        _require(bool(np.all(np.isfinite(values))), f"{self.kind} scores must be finite")
        if self.kind is ScoreKind.RANK_VARIANCE:
            _require(
                bool(np.all((values >= 0) & (values <= RANK_VARIANCE_MAX + _BOUND_SLACK))),
                "rank-variance scores must lie in [0, 0.25]",
            )

    def __len__(self) -> int:
        """Number of examples."""
        return int(self.values.shape[0])

    @property
    def label(self) -> str:
        """Kind with its parameter, e.g. ``hybrid(0.5)``."""
        if self.parameter is None:
            return str(self.kind)
        return f"{self.kind}({self.parameter:g})"


# --- Sampling ---


class PlanMode(StrEnum):
    """How a plan feeds the target trainer."""

    STATIC = "static"
    ONLINE = "online"


@dataclass(frozen=True)
class SamplingPlan:
    """A kept subset (static) or a sampling distribution with unbiasing weights (online)."""

    mode: PlanMode
    n: int
    kept_indices: np.ndarray | None = None
    probs: np.ndarray | None = None
    weights: np.ndarray | None = None
    alpha: float | None = None
    xi: float | None = None
    score_label: str = ""

    def __post_init__(self) -> None:
        """Validate the invariants of the chosen mode."""
        object.__setattr__(self, "mode", PlanMode(self.mode))
        if self.mode is PlanMode.STATIC:
            _require(self.kept_indices is not None, "static plan requires kept_indices")
            kept = np.asarray(self.kept_indices, dtype=np.int64)
            object.__setattr__(self, "kept_indices", kept)
            _require(bool(np.all(np.diff(kept) > 0)), "kept_indices must be unique and sorted")
            _require(kept.size == 0 or (kept[0] >= 0 and kept[-1] < self.n), "kept_indices out of range")
            return

        _require(self.probs is not None and self.weights is not None, "online plan requires probs and weights")
        probs = np.asarray(self.probs, dtype=np.float64)
        weights = np.asarray(self.weights, dtype=np.float64)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "weights", weights)
        shapes_ok = probs.shape == (self.n,) and weights.shape == (self.n,)
        _require(shapes_ok, f"probs and weights must have length {self.n}")
        _require(bool(np.all(probs > 0)), "online probs must be strictly positive")
        _require(abs(float(probs.sum()) - 1.0) <= PROB_SUM_TOL * max(1, self.n), "online probs must sum to 1")
        _require(bool(np.all(weights > 0)), "unbiasing weights must be positive")

    @property
    def size(self) -> int:
        """Examples per epoch: kept subset size (static) or N (online)."""
        if self.mode is PlanMode.STATIC:
            assert self.kept_indices is not None
            return int(self.kept_indices.size)
        return self.n


# --- Experiments ---


class NoiseKind(StrEnum):
    """Label-corruption protocols."""

    NONE = "none"
    UNIFORM = "uniform"
    TARGETED = "targeted"


class Method(StrEnum):
    """Subset-selection and sampling methods compared by the harness."""

    RANDOM = "random"
    DRIS_STATIC = "dris-static"
    DRIS_ONLINE = "dris-online"
    EL2N = "el2n"
    CONSENSUS = "consensus"
    FORGETTING = "forgetting"
    AUM = "aum"
    GRAD_NORM_IS = "grad-norm-is"
    LOSS_IS = "loss-is"
    UNIFORM_SGD = "uniform-sgd"
    HYBRID = "hybrid"
    UNIFORM_MIX = "uniform-mix"

    @property
    def is_static(self) -> bool:
        """Trains the target on a pruned subset with step parity."""
        return self in _STATIC_METHODS

    @property
    def is_online(self) -> bool:
        """Trains the target with importance-sampled minibatches."""
        return self in _ONLINE_METHODS

    @property
    def needs_proxies(self) -> bool:
        """Scores come from a proxy ensemble."""
        return self not in (Method.RANDOM, Method.UNIFORM_SGD)


_STATIC_METHODS = frozenset(
    {Method.RANDOM, Method.DRIS_STATIC, Method.EL2N, Method.CONSENSUS, Method.FORGETTING, Method.AUM}
)
_ONLINE_METHODS = frozenset(
    {Method.DRIS_ONLINE, Method.GRAD_NORM_IS, Method.LOSS_IS, Method.HYBRID, Method.UNIFORM_MIX}
)


@dataclass
class ScoreHistogram:
    """Shared-edge histograms of a score split by the corruption mask."""

    edges: np.ndarray
    clean_counts: np.ndarray
    corrupt_counts: np.ndarray
    corrupt_below_clean_p10: float
    corrupt_below_clean_median: float


@dataclass
class RunMetrics:
    """Outcome of one (config, seed) cell."""

    method: Method
    seed: int
    test_accuracy: float
    frac_corrupt_in_subset: float
    per_proxy_corr_train_acc: list[float] = field(default_factory=list)
    empirical_gap: float = float("nan")
    histogram: ScoreHistogram | None = None
    mask_hash: str = ""
    wall_seconds: float = 0.0
