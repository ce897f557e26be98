# Copyright (c) 2025 DR-IS contributors
# SPDX-License-Identifier: MIT

"""Per-example scores: rank disagreement and the magnitude/dynamics baselines."""

from __future__ import annotations

from collections.abc import Sequence
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import IngestionError, ParameterError, SchemaError
from .learners import TrainedModel, as_observed, eval_stats
from .models import LabeledDataset, ObservedData, PerSampleStats, RankMatrix, ScoreKind, ScoreVector


__all__ = [
    "aum",
    "consensus_mean_rank",
    "el2n",
    "error_l2_norms",
    "forgetting_events",
    "hybrid",
    "magnitude_scores",
    "model_stats",
    "normalized_ranks",
    "rank_matrix_from_losses",
    "rank_variance",
    "read_rank_matrix",
    "read_scores",
    "sample_rank_variance",
    "write_rank_matrix",
    "write_scores",
]

SCORE_COLUMNS = ("index", "kind", "value")


def normalized_ranks(losses: np.ndarray) -> np.ndarray:
    """Ascending-loss ordinal ranks divided by N; equal losses rank by index.

    >>> normalized_ranks(np.array([0.3, 0.1, 0.2])).tolist()
    [1.0, 0.3333333333333333, 0.6666666666666666]
    """
    losses = np.asarray(losses, dtype=np.float64)
    if not np.all(np.isfinite(losses)):
        msg = "losses must be finite to rank"
        raise ParameterError(msg)
    n = losses.shape[0]
    ranks = np.empty(n)
    ranks[np.argsort(losses, kind="stable")] = np.arange(1, n + 1)
    return ranks / n


def rank_matrix_from_losses(
    losses: Sequence[np.ndarray], proxy_ids: Sequence[str], snapshot_epoch: int = 0
) -> RankMatrix:
    """Stack one rank column per proxy loss vector."""
    columns = [normalized_ranks(loss) for loss in losses]
    return RankMatrix(np.column_stack(columns), tuple(proxy_ids), snapshot_epoch)


def sample_rank_variance(ranks: np.ndarray) -> np.ndarray:
    """Row-wise biased variance (1/K normalizer) of an N x K rank array."""
    return np.var(np.asarray(ranks, dtype=np.float64), axis=1)


def rank_variance(rm: RankMatrix) -> ScoreVector:
    """Rank-disagreement score of every example.

    Args:
        rm: Normalized ranks from K >= 2 proxies.

    Returns:
        Biased sample variance of each row, in [0, 0.25].

    Raises:
        ParameterError: If fewer than two proxies are given.
    """
    if rm.k < 2:  # noqa: PLR2004
        msg = f"rank variance needs K >= 2 proxies, got {rm.k}"
        raise ParameterError(msg)
    return ScoreVector(sample_rank_variance(rm.ranks), ScoreKind.RANK_VARIANCE)


def consensus_mean_rank(rm: RankMatrix) -> ScoreVector:
    """Mean rank across proxies (high means consistently hard)."""
    return ScoreVector(rm.ranks.mean(axis=1), ScoreKind.CONSENSUS_MEAN_RANK)


def error_l2_norms(model: TrainedModel, data: ObservedData | LabeledDataset) -> np.ndarray:
    """``||softmax(z(x_i)) - onehot(y_i)||`` for one model."""
    data = as_observed(data)
    probs = model.probabilities(data.features)
    probs[np.arange(data.n), data.labels] -= 1.0
    return np.linalg.norm(probs, axis=1)


def el2n(proxies: Sequence[TrainedModel], data: ObservedData | LabeledDataset) -> ScoreVector:
    """Ensemble-mean error L2 norm."""
    if not proxies:
        msg = "el2n needs at least one proxy"
        raise ParameterError(msg)
    norms = np.mean([error_l2_norms(model, data) for model in proxies], axis=0)
    return ScoreVector(norms, ScoreKind.EL2N)


def forgetting_events(correct_trajectory: np.ndarray) -> ScoreVector:
    """Count correct-to-incorrect transitions per example.

    Args:
        correct_trajectory: Boolean N x T matrix for one run, or K x N x T for
            an ensemble (counts are summed over proxies).

    Raises:
        ParameterError: If fewer than two epochs are recorded.
    """
    traj = np.asarray(correct_trajectory, dtype=bool)
    if traj.ndim == 2:  # noqa: PLR2004
        traj = traj[None]
    if traj.ndim != 3 or traj.shape[2] < 2:  # noqa: PLR2004
        msg = f"forgetting needs at least 2 epochs of correctness, got shape {np.shape(correct_trajectory)}"
        raise ParameterError(msg)
    events = traj[:, :, :-1] & ~traj[:, :, 1:]
    return ScoreVector(events.sum(axis=(0, 2)).astype(np.float64), ScoreKind.FORGETTING)


def aum(margin_trajectory: np.ndarray) -> ScoreVector:
    """Area under the margin: per-example mean margin over recorded epochs."""
    traj = np.asarray(margin_trajectory, dtype=np.float64)
    if traj.ndim != 2 or traj.shape[1] < 1:  # noqa: PLR2004
        msg = f"aum needs an N x T margin matrix with T >= 1, got shape {traj.shape}"
        raise ParameterError(msg)
    return ScoreVector(traj.mean(axis=1), ScoreKind.AUM)


def hybrid(grad_norms: ScoreVector, rank_var: ScoreVector, beta: float) -> ScoreVector:
    """``beta * grad_norm + (1 - beta) * rank_variance``, elementwise."""
    if not 0 <= beta <= 1:
        msg = f"beta must be in [0, 1], got {beta}"
        raise ParameterError(msg)
    if len(grad_norms) != len(rank_var):
        msg = f"score lengths differ: {len(grad_norms)} vs {len(rank_var)}"
        raise ParameterError(msg)
    values = beta * grad_norms.values + (1.0 - beta) * rank_var.values
    return ScoreVector(values, ScoreKind.HYBRID, parameter=beta)


def magnitude_scores(stats: Sequence[PerSampleStats], kind: ScoreKind | str) -> ScoreVector:
    """Ensemble mean of per-sample gradient norm or loss at one snapshot."""
    kind = ScoreKind(kind)
    if kind not in (ScoreKind.GRAD_NORM, ScoreKind.LOSS):
        msg = f"magnitude scores are grad-norm or loss, got {kind}"
        raise ParameterError(msg)
    if not stats:
        msg = "magnitude scores need at least one proxy"
        raise ParameterError(msg)
    field = "grad_norm" if kind is ScoreKind.GRAD_NORM else "loss"
    return ScoreVector(np.mean([getattr(s, field) for s in stats], axis=0), kind)


def model_stats(proxies: Sequence[TrainedModel], data: ObservedData | LabeledDataset) -> list[PerSampleStats]:
    """Per-sample statistics of every proxy."""
    return [eval_stats(model, data) for model in proxies]


# --- CSV ---


def write_scores(scores: ScoreVector, path: Path) -> None:
    """Write ``index,kind,value`` rows."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(
        {"index": np.arange(len(scores)), "kind": scores.label, "value": scores.values},
        columns=list(SCORE_COLUMNS),
    )
    frame.to_csv(path, index=False, float_format="%.17g")


def read_scores(path: Path) -> ScoreVector:
    """Read a file written by write_scores."""
    frame = _read_frame(path)
    if frame.empty:
        msg = f"no score rows in {path}"
        raise IngestionError(msg)
    if tuple(frame.columns) != SCORE_COLUMNS:
        msg = f"score file columns must be {','.join(SCORE_COLUMNS)}, got {','.join(map(str, frame.columns))}"
        raise SchemaError(msg, row=1)
    if not np.array_equal(frame["index"].to_numpy(), np.arange(len(frame))):
        msg = "score indices must be 0..N-1 in order"
        raise SchemaError(msg)
    label = str(frame["kind"].iloc[0])
    kind, _, rest = label.partition("(")
    parameter = float(rest.rstrip(")")) if rest else None
    return ScoreVector(frame["value"].to_numpy(dtype=np.float64), ScoreKind(kind), parameter)


def write_rank_matrix(rm: RankMatrix, path: Path) -> None:
    """Write an N x K CSV with the proxy ids as header."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(rm.ranks, columns=list(rm.proxy_ids)).to_csv(path, index=False, float_format="%.17g")


def read_rank_matrix(path: Path, snapshot_epoch: int = 0) -> RankMatrix:
    """Read a file written by write_rank_matrix."""
    frame = _read_frame(path)
    return RankMatrix(frame.to_numpy(dtype=np.float64), tuple(map(str, frame.columns)), snapshot_epoch)


def _read_frame(path: Path) -> pd.DataFrame:
    try:
        return pd.read_csv(path)
    except FileNotFoundError:
        msg = f"file not found: {path}"
        raise IngestionError(msg) from None
    except pd.errors.EmptyDataError:
        msg = f"empty file: {path}"
        raise IngestionError(msg) from None
