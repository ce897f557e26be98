# Copyright (c) 2025 DR-IS contributors
# SPDX-License-Identifier: MIT

"""Small differentiable models and a seeded mini-batch SGD trainer.

Parameters live in one flat float64 vector. For linear models the layout is
``W (d x C)`` then ``b (C)``; for the one-hidden-layer MLP it is
``W1 (d x h)``, ``b1 (h)``, ``W2 (h x C)``, ``b2 (C)`` with a tanh hidden layer.
The L2 penalty ``lambda * ||W||^2`` covers weight matrices only, never biases.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from collections.abc import Callable, Iterable
from dataclasses import dataclass
import logging
import math
from pathlib import Path

import numpy as np
from pydantic import BaseModel, ValidationError
from scipy.special import logsumexp, softmax

from dris.utils.rng import derive_rng

from .errors import DivergenceError, ParameterError, SchemaError, UndefinedStatisticError
from .models import LabeledDataset, ModelKind, ModelSpec, ObservedData, PerSampleStats, Schedule, TrainConfig


__all__ = [
    "CHECKPOINT_VERSION",
    "EpochHook",
    "EpochOrder",
    "ShuffleOrder",
    "TrainedModel",
    "accuracy",
    "as_observed",
    "batch_gradient",
    "eval_stats",
    "init_params",
    "learning_rate",
    "margins_from_logits",
    "objective",
    "per_sample_gradients",
    "step_scales",
    "train",
]

logger = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1

# Floor of the decreasing schedule, as a fraction of the base rate
_LR_FLOOR = 0.01

# An epoch whose mean objective exceeds this multiple of the starting objective has run away
_RUNAWAY_FACTOR = 1e6

# Upper bounds on the loss curvature along one logit
_LOGIT_CURVATURE = {ModelKind.LINEAR_SQUARED_HINGE: 2.0, ModelKind.LINEAR_SOFTMAX: 0.5, ModelKind.MLP: 0.5}


class CheckpointFile(BaseModel):
    """On-disk model container."""

    version: int
    kind: ModelKind
    input_dim: int
    num_classes: int
    hidden_width: int = 0
    l2_lambda: float = 0.0
    weights: list[float]


@dataclass(frozen=True)
class TrainedModel:
    """A model spec with its (read-only) flat parameter vector."""

    spec: ModelSpec
    params: np.ndarray

    def __post_init__(self) -> None:
        """Freeze and length-check the parameters."""
        params = np.array(self.params, dtype=np.float64)
        if params.shape != (self.spec.num_params,):
            msg = f"{self.spec.kind} with this shape needs {self.spec.num_params} parameters, got {params.shape}"
            raise ParameterError(msg)
        params.flags.writeable = False
        object.__setattr__(self, "params", params)

    def logits(self, features: np.ndarray) -> np.ndarray:
        """Raw class scores, shape (N, C)."""
        return _forward(self.spec, self.params, _check_features(self.spec, features))[0]

    def predict(self, features: np.ndarray) -> np.ndarray:
        """Argmax class, ties to the lowest class id."""
        return np.argmax(self.logits(features), axis=1)

    def probabilities(self, features: np.ndarray) -> np.ndarray:
        """Softmax of the logits (also for hinge-trained models)."""
        return softmax(self.logits(features), axis=1)

    def save(self, path: Path) -> None:
        """Write a versioned JSON checkpoint."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        checkpoint = CheckpointFile(
            version=CHECKPOINT_VERSION,
            kind=self.spec.kind,
            input_dim=self.spec.input_dim,
            num_classes=self.spec.num_classes,
            hidden_width=self.spec.hidden_width,
            l2_lambda=self.spec.l2_lambda,
            weights=self.params.tolist(),
        )
        path.write_text(checkpoint.model_dump_json())

    @classmethod
    def load(cls, path: Path) -> TrainedModel:
        """Read a checkpoint written by save."""
        path = Path(path)
        try:
            checkpoint = CheckpointFile.model_validate_json(path.read_text())
        except FileNotFoundError:
            msg = f"checkpoint not found: {path}"
            raise SchemaError(msg) from None
        except ValidationError as e:
            msg = f"invalid checkpoint {path}: {e.error_count()} problem(s), first: {e.errors()[0]['msg']}"
            raise SchemaError(msg) from None
        if checkpoint.version != CHECKPOINT_VERSION:
            msg = f"checkpoint version {checkpoint.version} is not supported (expected {CHECKPOINT_VERSION})"
            raise SchemaError(msg)
        spec = ModelSpec(
            checkpoint.kind,
            checkpoint.input_dim,
            checkpoint.num_classes,
            checkpoint.hidden_width,
            checkpoint.l2_lambda,
        )
        return cls(spec, np.asarray(checkpoint.weights))


# Called after every epoch as hook(epoch, model, stats)
EpochHook = Callable[[int, TrainedModel, PerSampleStats], None]


# --- Parameter layout ---


def _unpack(spec: ModelSpec, params: np.ndarray) -> list[np.ndarray]:
    """Split the flat vector into layer views (weights and biases alternate)."""
    d, c, h = spec.input_dim, spec.num_classes, spec.hidden_width
    shapes = [(d, c), (c,)] if spec.kind.is_linear else [(d, h), (h,), (h, c), (c,)]
    views, start = [], 0
    for shape in shapes:
        size = math.prod(shape)
        views.append(params[start : start + size].reshape(shape))
        start += size
    return views


def _weight_mask(spec: ModelSpec) -> np.ndarray:
    """1.0 on weight-matrix entries, 0.0 on biases."""
    mask = np.zeros(spec.num_params)
    for i, view in enumerate(_unpack(spec, mask)):
        if i % 2 == 0:
            view[...] = 1.0
    return mask


def init_params(spec: ModelSpec, rng: np.random.Generator) -> np.ndarray:
    """Draw every parameter uniformly from +-1/sqrt(fan_in) of its layer."""
    params = np.empty(spec.num_params)
    views = _unpack(spec, params)
    fan_ins = [spec.input_dim] * 2 if spec.kind.is_linear else [spec.input_dim] * 2 + [spec.hidden_width] * 2
    for view, fan_in in zip(views, fan_ins, strict=True):
        bound = 1.0 / math.sqrt(fan_in)
        view[...] = rng.uniform(-bound, bound, size=view.shape)
    return params


def _check_features(spec: ModelSpec, features: np.ndarray) -> np.ndarray:
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[1] != spec.input_dim:  # noqa: PLR2004
        msg = f"model expects {spec.input_dim} features, got shape {features.shape}"
        raise ParameterError(msg)
    return features


def _forward(spec: ModelSpec, params: np.ndarray, x: np.ndarray) -> tuple[np.ndarray, np.ndarray | None]:
    """Logits and, for the MLP, the hidden activations."""
    if spec.kind.is_linear:
        w, b = _unpack(spec, params)
        return x @ w + b, None
    w1, b1, w2, b2 = _unpack(spec, params)
    hidden = np.tanh(x @ w1 + b1)
    return hidden @ w2 + b2, hidden


# --- Losses ---


def _loss_and_logit_grad(spec: ModelSpec, logits: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample data loss and its gradient with respect to the logits."""
    rows = np.arange(logits.shape[0])
    if spec.kind is ModelKind.LINEAR_SQUARED_HINGE:
        # one-vs-rest targets: +1 for the label, -1 elsewhere
        targets = -np.ones_like(logits)
        targets[rows, y] = 1.0
        slack = np.maximum(0.0, 1.0 - targets * logits)
        return np.sum(slack**2, axis=1), -2.0 * targets * slack

    lse = logsumexp(logits, axis=1)
    loss = lse - logits[rows, y]
    grad = np.exp(logits - lse[:, None])
    grad[rows, y] -= 1.0
    return np.maximum(loss, 0.0), grad


def margins_from_logits(logits: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """``z_y - max_{k != y} z_k`` per row."""
    logits = np.asarray(logits, dtype=np.float64)
    rows = np.arange(logits.shape[0])
    others = logits.copy()
    others[rows, labels] = -np.inf
    return logits[rows, labels] - others.max(axis=1)


def _backward(
    spec: ModelSpec, params: np.ndarray, x: np.ndarray, hidden: np.ndarray | None, gz: np.ndarray
) -> tuple[np.ndarray, np.ndarray | None]:
    """Per-sample gradient w.r.t. the hidden pre-activation (MLP only)."""
    if spec.kind.is_linear:
        return gz, None
    _, _, w2, _ = _unpack(spec, params)
    assert hidden is not None
    return gz, (gz @ w2.T) * (1.0 - hidden**2)


def per_sample_gradients(spec: ModelSpec, params: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Exact gradient of ``l_i + lambda * ||W||^2`` for every example, shape (N, P)."""
    x = _check_features(spec, x)
    logits, hidden = _forward(spec, params, x)
    _, gz = _loss_and_logit_grad(spec, logits, y)
    n = x.shape[0]
    if spec.kind.is_linear:
        parts = [np.einsum("nd,nc->ndc", x, gz).reshape(n, -1), gz]
    else:
        assert hidden is not None
        _, ga = _backward(spec, params, x, hidden, gz)
        assert ga is not None
        parts = [
            np.einsum("nd,nh->ndh", x, ga).reshape(n, -1),
            ga,
            np.einsum("nh,nc->nhc", hidden, gz).reshape(n, -1),
            gz,
        ]
    reg = 2.0 * spec.l2_lambda * params * _weight_mask(spec)
    return np.hstack(parts) + reg


def _per_sample_grad_norms(
    spec: ModelSpec, x: np.ndarray, hidden: np.ndarray | None, gz: np.ndarray, ga: np.ndarray | None
) -> np.ndarray:
    # ||x (x) g||^2 = ||x||^2 ||g||^2, biases add ||g||^2
    if spec.kind.is_linear:
        return np.sqrt((np.sum(x**2, axis=1) + 1.0) * np.sum(gz**2, axis=1))
    assert hidden is not None
    assert ga is not None
    sq = (np.sum(hidden**2, axis=1) + 1.0) * np.sum(gz**2, axis=1)
    sq += (np.sum(x**2, axis=1) + 1.0) * np.sum(ga**2, axis=1)
    return np.sqrt(sq)


def batch_gradient(
    spec: ModelSpec,
    params: np.ndarray,
    x: np.ndarray,
    y: np.ndarray,
    sample_weights: np.ndarray | None = None,
) -> np.ndarray:
    """``(1/B) * sum_i w_i * grad f_i`` where ``f_i`` includes the L2 penalty.

    With ``sample_weights`` None every weight is 1 and this is the plain
    mini-batch gradient of the regularized objective.
    """
    return _loss_and_gradient(spec, params, x, y, sample_weights)[1]


def _loss_and_gradient(
    spec: ModelSpec,
    params: np.ndarray,
    x: np.ndarray,
    y: np.ndarray,
    sample_weights: np.ndarray | None = None,
    data_scales: np.ndarray | None = None,
) -> tuple[float, np.ndarray]:
    # data_scales shrink each example's data gradient only; the value and the L2 term are unscaled
    x = _check_features(spec, x)
    b = x.shape[0]
    weights = np.ones(b) if sample_weights is None else np.asarray(sample_weights, dtype=np.float64)
    logits, hidden = _forward(spec, params, x)
    loss, gz = _loss_and_logit_grad(spec, logits, y)
    step_weights = weights if data_scales is None else weights * data_scales
    gz_w = gz * (step_weights / b)[:, None]
    if spec.kind.is_linear:
        parts = [x.T @ gz_w, gz_w.sum(axis=0)]
    else:
        assert hidden is not None
        _, ga_w = _backward(spec, params, x, hidden, gz_w)
        assert ga_w is not None
        parts = [x.T @ ga_w, ga_w.sum(axis=0), hidden.T @ gz_w, gz_w.sum(axis=0)]
    grad = np.concatenate([p.ravel() for p in parts])
    mask = _weight_mask(spec)
    mean_weight = float(weights.mean())
    grad += mean_weight * 2.0 * spec.l2_lambda * params * mask
    value = float(np.mean(weights * loss)) + mean_weight * spec.l2_lambda * float(np.sum((params * mask) ** 2))
    return value, grad


def objective(spec: ModelSpec, params: np.ndarray, x: np.ndarray, y: np.ndarray) -> float:
    """Mean data loss plus ``lambda * ||W||^2``."""
    x = _check_features(spec, x)
    logits, _ = _forward(spec, params, x)
    loss, _ = _loss_and_logit_grad(spec, logits, y)
    weights = params * _weight_mask(spec)
    return float(loss.mean()) + spec.l2_lambda * float(np.sum(weights**2))


# --- Evaluation ---


def as_observed(data: ObservedData | LabeledDataset) -> ObservedData:
    """Strip ground truth from a LabeledDataset; pass ObservedData through."""
    return data.observed if isinstance(data, LabeledDataset) else data


def eval_stats(model: TrainedModel, data: ObservedData | LabeledDataset) -> PerSampleStats:
    """Per-example loss, margin, gradient norm and correctness.

    Gradient norms are of the data loss alone over all parameters.

    Raises:
        ParameterError: If feature or class counts do not match the model.
    """
    data = as_observed(data)
    spec = model.spec
    if data.num_classes != spec.num_classes:
        msg = f"model has {spec.num_classes} classes, data has {data.num_classes}"
        raise ParameterError(msg)
    x = _check_features(spec, data.features)
    logits, hidden = _forward(spec, model.params, x)
    loss, gz = _loss_and_logit_grad(spec, logits, data.labels)
    _, ga = _backward(spec, model.params, x, hidden, gz)
    return PerSampleStats(
        loss=loss,
        margin=margins_from_logits(logits, data.labels),
        grad_norm=_per_sample_grad_norms(spec, x, hidden, gz, ga),
        correct=np.argmax(logits, axis=1) == data.labels,
    )


def accuracy(model: TrainedModel, data: ObservedData | LabeledDataset, mask: np.ndarray | None = None) -> float:
    """Fraction of (optionally mask-selected) examples predicted correctly.

    Raises:
        UndefinedStatisticError: If the selection is empty.
    """
    data = as_observed(data)
    correct = model.predict(data.features) == data.labels
    if mask is not None:
        correct = correct[np.asarray(mask, dtype=bool)]
    if correct.size == 0:
        msg = "accuracy over an empty selection is undefined"
        raise UndefinedStatisticError(msg)
    return float(correct.mean())


# --- Training ---


def step_scales(spec: ModelSpec, x: np.ndarray, lr: float, sample_weights: np.ndarray | None = None) -> np.ndarray:
    """Per-example factors in (0, 1] that keep an SGD step from overshooting.

    Example ``i`` moves its own logits by ``lr * w_i * c * (||x_i||^2 + 1) / B``
    times its logit gradient, where ``c`` is the largest second derivative of
    the loss in one logit (the +1 is the bias). The factor caps that product
    at 1, so no example is pushed past the minimizer of its own loss. For the
    MLP the hidden layer adds its tanh bound ``hidden_width + 1``, which makes
    the cap an estimate rather than a guarantee.
    """
    x = _check_features(spec, x)
    b = x.shape[0]
    weights = np.ones(b) if sample_weights is None else np.asarray(sample_weights, dtype=np.float64)
    sq_norms = np.sum(x**2, axis=1) + 1.0
    if not spec.kind.is_linear:
        sq_norms += spec.hidden_width + 1.0
    reach = lr * weights * _LOGIT_CURVATURE[spec.kind] * sq_norms / b
    with np.errstate(divide="ignore"):
        return np.minimum(1.0, 1.0 / reach)


def learning_rate(cfg: TrainConfig, step: int, total_steps: int) -> float:
    """Step size at 0-based global ``step`` of ``total_steps``.

    The decreasing schedule is ``lr / (1 + step / T0)`` with ``T0`` a tenth of
    the run, floored at ``lr / 100``. Its clamp is applied per example by
    ``train`` through ``step_scales``.
    """
    if cfg.schedule is Schedule.CONSTANT:
        return cfg.lr
    if cfg.schedule is Schedule.COSINE:
        return cfg.lr * 0.5 * (1.0 + math.cos(math.pi * step / max(1, total_steps)))
    t0 = max(1.0, total_steps / 10)
    return max(cfg.lr / (1.0 + step / t0), cfg.lr * _LR_FLOOR)


class EpochOrder(ABC):
    """Supplies the example order (and optional gradient weights) of each epoch."""

    @property
    @abstractmethod
    def size(self) -> int:
        """Examples visited per epoch."""

    @abstractmethod
    def draw(self, epoch: int) -> tuple[np.ndarray, np.ndarray | None]:
        """Indices for 1-based ``epoch`` and their weights (None for unweighted)."""


class ShuffleOrder(EpochOrder):
    """A fresh permutation of ``indices`` every epoch."""

    def __init__(self, indices: np.ndarray | int, seed: int) -> None:
        """Shuffle all of range(indices) when given an int."""
        self._indices = np.arange(indices) if isinstance(indices, int) else np.asarray(indices, dtype=np.int64)
        self._seed = seed

    @property
    def size(self) -> int:
        """Length of the shuffled index set."""
        return int(self._indices.size)

    def draw(self, epoch: int) -> tuple[np.ndarray, np.ndarray | None]:
        """Permutation keyed by (seed, epoch); unweighted."""
        return derive_rng(self._seed, "shuffle", epoch).permutation(self._indices), None


def train(
    spec: ModelSpec,
    cfg: TrainConfig,
    data: ObservedData | LabeledDataset,
    epoch_hooks: Iterable[EpochHook] = (),
    order: EpochOrder | None = None,
) -> TrainedModel:
    """Train ``spec`` with mini-batch SGD.

    Batches are contiguous slices of each epoch's order. Hooks receive
    statistics on the full ``data`` after every epoch (1-based).

    Args:
        spec: Architecture.
        cfg: Hyperparameters and seed.
        data: Features and observed labels (ground truth is never consulted).
        epoch_hooks: Callables ``(epoch, model, stats)``.
        order: Per-epoch example order; defaults to a seeded full shuffle.

    Returns:
        The final model.

    Raises:
        ParameterError: If data and spec shapes disagree.
        DivergenceError: If a loss or parameter becomes non-finite, or an
            epoch's mean objective grows past a million times its starting value.
    """
    data = as_observed(data)
    _check_features(spec, data.features)
    if data.num_classes != spec.num_classes:
        msg = f"model has {spec.num_classes} classes, data has {data.num_classes}"
        raise ParameterError(msg)
    hooks = list(epoch_hooks)
    order = order if order is not None else ShuffleOrder(data.n, cfg.seed)
    clamped = cfg.schedule is Schedule.DECREASING_CLAMPED

    params = init_params(spec, derive_rng(cfg.seed, "init"))
    velocity = np.zeros_like(params)
    steps_per_epoch = max(1, math.ceil(order.size / cfg.batch_size))
    total_steps = cfg.epochs * steps_per_epoch
    step = 0
    with np.errstate(over="ignore", invalid="ignore"):
        start_objective = objective(spec, params, data.features, data.labels)

    for epoch in range(1, cfg.epochs + 1):
        indices, weights = order.draw(epoch)
        epoch_losses = []
        for start in range(0, indices.size, cfg.batch_size):
            batch = indices[start : start + cfg.batch_size]
            batch_weights = None if weights is None else weights[start : start + cfg.batch_size]
            x_batch = data.features[batch]
            lr = learning_rate(cfg, step, total_steps)
            scales = step_scales(spec, x_batch, lr, batch_weights) if clamped else None
            with np.errstate(over="ignore", invalid="ignore"):
                loss, grad = _loss_and_gradient(spec, params, x_batch, data.labels[batch], batch_weights, scales)
                velocity = cfg.momentum * velocity + grad + cfg.weight_decay * params
                params = params - lr * velocity
            if not (math.isfinite(loss) and np.all(np.isfinite(params))):
                raise DivergenceError(epoch)
            epoch_losses.append(loss)
            step += 1

        epoch_objective = float(np.mean(epoch_losses)) if epoch_losses else 0.0
        if epoch_objective > _RUNAWAY_FACTOR * max(start_objective, 1.0):
            raise DivergenceError(epoch, reason=f"objective {epoch_objective:.3g} ran away from {start_objective:.3g}")

        if hooks:
            model = TrainedModel(spec, params)
            stats = eval_stats(model, data)
            for hook in hooks:
                hook(epoch, model, stats)
        logger.debug("epoch %d/%d done (seed %d)", epoch, cfg.epochs, cfg.seed)

    return TrainedModel(spec, params)
