# Copyright (c) 2025 DR-IS contributors
# SPDX-License-Identifier: MIT

"""Turn scores into a static pruned subset or an online importance-sampling plan."""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np
from pydantic import BaseModel, ValidationError

from dris.utils.rng import derive_rng, floor_count

from .errors import DegenerateDistributionError, ParameterError, SchemaError
from .learners import EpochOrder, TrainedModel, as_observed, batch_gradient
from .models import LabeledDataset, ObservedData, PlanMode, SamplingPlan, ScoreKind, ScoreVector


__all__ = [
    "DEFAULT_XI",
    "ImportanceOrder",
    "online_distribution",
    "proportional_distribution",
    "read_plan",
    "select_by_removal",
    "select_random",
    "select_top_alpha",
    "step_parity_epochs",
    "unbiased_batch_gradient",
    "uniform_mix",
    "weighted_epoch_indices",
    "write_plan",
]

DEFAULT_XI = 0.1

# Absorbs representation error in base / alpha (e.g. 160 / 0.1)
_PARITY_SLACK = 1e-9


def _kept_count(n: int, alpha: float) -> int:
    if not 0 < alpha <= 1:
        msg = f"alpha must be in (0, 1], got {alpha}"
        raise ParameterError(msg)
    m = floor_count(alpha, n)
    if m == 0:
        msg = f"alpha={alpha} keeps no examples out of {n}"
        raise ParameterError(msg)
    return m


def select_top_alpha(scores: ScoreVector, alpha: float) -> SamplingPlan:
    """Keep the ``floor(alpha * N)`` highest-scoring examples.

    Equal scores are kept in ascending index order.

    Args:
        scores: Per-example scores (higher is kept first).
        alpha: Keep fraction in (0, 1].

    Returns:
        A static plan with sorted kept indices.
    """
    n = len(scores)
    m = _kept_count(n, alpha)
    # lexsort: last key is primary -> descending score, then ascending index
    ranking = np.lexsort((np.arange(n), -scores.values))
    kept = np.sort(ranking[:m])
    return SamplingPlan(PlanMode.STATIC, n, kept_indices=kept, alpha=alpha, score_label=scores.label)


def select_by_removal(scores: ScoreVector, alpha: float) -> SamplingPlan:
    """Drop the ``N - floor(alpha * N)`` lowest-scoring examples.

    Among equal scores the highest index is dropped first, so the result equals
    select_top_alpha for every input.
    """
    n = len(scores)
    m = _kept_count(n, alpha)
    removal = np.lexsort((-np.arange(n), scores.values))
    kept = np.setdiff1d(np.arange(n), removal[: n - m])
    return SamplingPlan(PlanMode.STATIC, n, kept_indices=kept, alpha=alpha, score_label=scores.label)


def select_random(n: int, alpha: float, seed: int) -> SamplingPlan:
    """A uniformly random ``floor(alpha * N)``-subset."""
    m = _kept_count(n, alpha)
    kept = np.sort(derive_rng(seed, "random-subset").choice(n, size=m, replace=False))
    return SamplingPlan(PlanMode.STATIC, n, kept_indices=kept, alpha=alpha, score_label="random")


def online_distribution(scores: ScoreVector, xi: float = DEFAULT_XI) -> SamplingPlan:
    """Smoothed importance distribution ``q_i ∝ s_i + xi * mean(s)``.

    Args:
        scores: Nonnegative per-example scores.
        xi: Smoothing constant, strictly positive; the smoothing term scales
            with the scores, so multiplying all scores by c > 0 leaves q unchanged.

    Returns:
        An online plan with unbiasing weights ``1 / (N q_i)``.

    Raises:
        ParameterError: If ``xi`` is not positive.
        DegenerateDistributionError: If some example would get zero mass.
    """
    if not xi > 0:
        msg = f"xi must be > 0, got {xi}"
        raise ParameterError(msg)
    values = scores.values
    mean = float(values.mean()) if values.size else 0.0
    return _plan_from_masses(values + xi * mean, scores.label, xi)


def proportional_distribution(scores: ScoreVector) -> SamplingPlan:
    """Unsmoothed distribution ``q_i ∝ s_i`` for scores that already carry their own floor.

    Uniform-mix masses are the intended input; every score must be positive.

    Raises:
        DegenerateDistributionError: If some score is zero.
    """
    return _plan_from_masses(scores.values, scores.label, None)


def _plan_from_masses(masses: np.ndarray, label: str, xi: float | None) -> SamplingPlan:
    n = masses.shape[0]
    if n == 0:
        msg = "cannot build a distribution over zero examples"
        raise DegenerateDistributionError(msg)
    if not np.all(masses > 0):
        msg = f"{label} masses are not all positive; sampling would ignore some examples"
        raise DegenerateDistributionError(msg)
    probs = masses / masses.sum()
    weights = 1.0 / (n * probs)
    return SamplingPlan(PlanMode.ONLINE, n, probs=probs, weights=weights, xi=xi, score_label=label)


def uniform_mix(scores: ScoreVector, k: float) -> ScoreVector:
    """Masses ``(1 - k) / N + k * s_i`` blending uniform sampling with the score.

    Raises:
        ParameterError: If ``k`` is outside [0, 1].
        DegenerateDistributionError: If ``k = 1`` and every score is zero.
    """
    if not 0 <= k <= 1:
        msg = f"k must be in [0, 1], got {k}"
        raise ParameterError(msg)
    n = len(scores)
    if k == 1 and not np.any(scores.values > 0):
        msg = "uniform-mix with k=1 needs at least one positive score"
        raise DegenerateDistributionError(msg)
    return ScoreVector((1.0 - k) / n + k * scores.values, ScoreKind.UNIFORM_MIX, parameter=k)


def step_parity_epochs(base_epochs: int, alpha: float) -> int:
    """Epochs on a pruned subset that match ``base_epochs`` full-data steps.

    >>> step_parity_epochs(160, 0.25)
    640
    """
    if not 0 < alpha <= 1:
        msg = f"alpha must be in (0, 1], got {alpha}"
        raise ParameterError(msg)
    return math.floor(base_epochs / alpha + _PARITY_SLACK)


def _require_online(plan: SamplingPlan) -> tuple[np.ndarray, np.ndarray]:
    if plan.mode is not PlanMode.ONLINE or plan.probs is None or plan.weights is None:
        msg = f"an online plan is required, got {plan.mode}"
        raise ParameterError(msg)
    return plan.probs, plan.weights


def weighted_epoch_indices(plan: SamplingPlan, size: int, seed: int, epoch: int = 0) -> np.ndarray:
    """Draw ``size`` indices i.i.d. from the plan's distribution (with replacement)."""
    probs, _ = _require_online(plan)
    return derive_rng(seed, "importance-draw", epoch).choice(plan.n, size=size, replace=True, p=probs)


def unbiased_batch_gradient(
    model: TrainedModel,
    data: ObservedData | LabeledDataset,
    batch_indices: np.ndarray,
    plan: SamplingPlan,
) -> np.ndarray:
    """``(1/|B|) * sum_{i in B} w_i * grad f_i`` with the plan's unbiasing weights."""
    _, weights = _require_online(plan)
    data = as_observed(data)
    batch = np.asarray(batch_indices, dtype=np.int64)
    if data.n != plan.n:
        msg = f"plan covers {plan.n} examples, data has {data.n}"
        raise ParameterError(msg)
    if batch.size == 0 or batch.min() < 0 or batch.max() >= plan.n:
        msg = f"batch indices must be a nonempty subset of [0, {plan.n})"
        raise ParameterError(msg)
    return batch_gradient(model.spec, model.params, data.features[batch], data.labels[batch], weights[batch])


class ImportanceOrder(EpochOrder):
    """N i.i.d. draws from an online plan per epoch, carrying their weights."""

    def __init__(self, plan: SamplingPlan, seed: int) -> None:
        """Validate the plan once."""
        _require_online(plan)
        self._plan = plan
        self._seed = seed

    @property
    def size(self) -> int:
        """Draws per epoch (one full pass worth)."""
        return self._plan.n

    def draw(self, epoch: int) -> tuple[np.ndarray, np.ndarray | None]:
        """Indices keyed by (seed, epoch) and their unbiasing weights."""
        indices = weighted_epoch_indices(self._plan, self._plan.n, self._seed, epoch)
        assert self._plan.weights is not None
        return indices, self._plan.weights[indices]


# --- JSON ---


class PlanFile(BaseModel):
    """On-disk plan container."""

    mode: PlanMode
    n: int
    alpha: float | None = None
    xi: float | None = None
    score_label: str = ""
    kept_indices: list[int] | None = None
    probs: list[float] | None = None
    weights: list[float] | None = None


def write_plan(plan: SamplingPlan, path: Path) -> None:
    """Serialize a plan as JSON."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = PlanFile(
        mode=plan.mode,
        n=plan.n,
        alpha=plan.alpha,
        xi=plan.xi,
        score_label=plan.score_label,
        kept_indices=None if plan.kept_indices is None else plan.kept_indices.tolist(),
        probs=None if plan.probs is None else plan.probs.tolist(),
        weights=None if plan.weights is None else plan.weights.tolist(),
    )
    path.write_text(payload.model_dump_json(exclude_none=True, indent=2))


def read_plan(path: Path) -> SamplingPlan:
    """Read a plan written by write_plan."""
    path = Path(path)
    try:
        payload = PlanFile.model_validate_json(path.read_text())
    except FileNotFoundError:
        msg = f"plan not found: {path}"
        raise SchemaError(msg) from None
    except ValidationError as e:
        msg = f"invalid plan {path}: {e.errors()[0]['msg']}"
        raise SchemaError(msg) from None
    return SamplingPlan(
        payload.mode,
        payload.n,
        kept_indices=None if payload.kept_indices is None else np.asarray(payload.kept_indices),
        probs=None if payload.probs is None else np.asarray(payload.probs),
        weights=None if payload.weights is None else np.asarray(payload.weights),
        alpha=payload.alpha,
        xi=payload.xi,
        score_label=payload.score_label,
    )
