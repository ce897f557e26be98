# Copyright (c) 2025 DR-IS contributors
# SPDX-License-Identifier: MIT

"""Experiment orchestration: proxy phase, scoring, selection, target training, metrics.

This module handles:
- prepare_data: dataset generation/loading and shared-mask noise injection
- train_proxy_ensemble / compute_scores / build_plan: the scoring pipeline
- run_experiment / sweep: seeded cells with incremental metrics.csv output
- paired_t / histogram_export / summarize_metrics: analysis helpers
- planted_k_ablation: K-sweep of rank disagreement on planted rank laws
"""

from __future__ import annotations

from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace
import json
import logging
import math
from pathlib import Path
import time
from typing import Any

import numpy as np
import pandas as pd
from pydantic import ValidationError
from scipy import stats

from dris.utils.rng import derive_rng, derive_seed

from .certify import (
    PlantedLayout,
    TheoremParams,
    estimate_assumption_params,
    sample_planted_ranks,
    separation_and_contamination,
)
from .config import ExperimentConfig
from .data import (
    DenseFormat,
    generate_synthetic,
    inject_targeted_noise,
    inject_uniform_noise,
    load_dense,
    mask_digest,
    train_test_split,
)
from .errors import DivergenceError, DrisError, ParameterError, SchemaError, UndefinedStatisticError
from .learners import EpochOrder, ShuffleOrder, TrainedModel, accuracy, train
from .models import (
    LabeledDataset,
    Method,
    ModelSpec,
    NoiseKind,
    ObservedData,
    PerSampleStats,
    PlanMode,
    RankMatrix,
    RunMetrics,
    SamplingPlan,
    ScoreHistogram,
    ScoreKind,
    ScoreVector,
    TrainConfig,
)
from .sampler import (
    ImportanceOrder,
    online_distribution,
    proportional_distribution,
    select_by_removal,
    select_random,
    select_top_alpha,
    step_parity_epochs,
    uniform_mix,
)
from .scores import (
    aum,
    consensus_mean_rank,
    el2n,
    forgetting_events,
    hybrid,
    magnitude_scores,
    rank_matrix_from_losses,
    rank_variance,
    sample_rank_variance,
)


__all__ = [
    "METRICS_COLUMNS",
    "METRICS_SCHEMA_VERSION",
    "SWEEP_AXES",
    "PairedT",
    "ProxyEnsemble",
    "apply_axis",
    "build_plan",
    "compute_scores",
    "histogram_export",
    "load_ensemble",
    "paired_t",
    "paired_t_from_summary",
    "planted_k_ablation",
    "prepare_data",
    "read_metrics",
    "run_experiment",
    "save_ensemble",
    "subset_corruption",
    "summarize_metrics",
    "sweep",
    "target_schedule",
    "train_proxy_ensemble",
]

logger = logging.getLogger(__name__)

METRICS_SCHEMA_VERSION = 1

# Frozen column order of metrics.csv; bump METRICS_SCHEMA_VERSION on change
METRICS_COLUMNS: tuple[str, ...] = (
    "schema_version",
    "method",
    "noise",
    "noise_rate",
    "axis",
    "axis_value",
    "seed",
    "K",
    "alpha",
    "test_accuracy",
    "frac_corrupt_in_subset",
    "empirical_gap",
    "per_proxy_corr_train_acc",
    "mask_hash",
    "status",
    "error",
    "wall_seconds",
)

SWEEP_AXES = ("K", "alpha", "epsilon", "beta", "k")

ABLATION_COLUMNS = ("K", "empirical_gap", "corrupt_below_clean_median", "bulk_below_boundary_median")

ENSEMBLE_ARRAYS = "trajectories.npz"

_GROUP_KEYS = ["method", "noise", "noise_rate", "axis", "axis_value"]


# --- Data ---


def prepare_data(cfg: ExperimentConfig, seed: int) -> tuple[LabeledDataset, LabeledDataset]:
    """Build the (possibly corrupted) training set and the clean test set for ``seed``.

    The noise mask depends only on the dataset, noise settings and seed, so
    every method run on the same seed sees the identical mask.
    """
    ds_cfg = cfg.dataset
    if ds_cfg.source == "synthetic":
        train_ds = generate_synthetic(ds_cfg.synthetic_spec(derive_seed(seed, "dataset")))
        test_ds = generate_synthetic(ds_cfg.synthetic_spec(derive_seed(seed, "test-data"), n=ds_cfg.test_n))
    else:
        assert ds_cfg.path is not None
        fmt = DenseFormat(ds_cfg.source)
        full = load_dense(
            ds_cfg.path,
            fmt,
            labels_path=ds_cfg.labels_path,
            header=ds_cfg.header,
            num_classes=ds_cfg.num_classes,
            scale=ds_cfg.scale,
        )
        if ds_cfg.test_path is not None:
            train_ds = full
            test_ds = load_dense(
                ds_cfg.test_path,
                fmt,
                labels_path=ds_cfg.test_labels_path,
                header=ds_cfg.header,
                num_classes=full.num_classes,
                scale=ds_cfg.scale,
            )
        else:
            train_ds, test_ds = train_test_split(full, ds_cfg.test_fraction, derive_seed(seed, "test-split"))

    noise_seed = derive_seed(seed, "noise")
    if cfg.noise.kind is NoiseKind.UNIFORM:
        train_ds = inject_uniform_noise(train_ds, cfg.noise.rate, noise_seed)
    elif cfg.noise.kind is NoiseKind.TARGETED:
        spec = cfg.proxy_model.to_spec(train_ds.d, train_ds.num_classes)
        attacker = train(spec, cfg.proxy_train.to_train_config(derive_seed(seed, "attacker")), train_ds.clean_view)
        train_ds = inject_targeted_noise(train_ds, cfg.noise.rate, attacker, noise_seed)
    return train_ds, test_ds


# --- Proxy phase ---


@dataclass
class ProxyEnsemble:
    """K proxies with their snapshot statistics and per-epoch trajectories."""

    models: list[TrainedModel]
    snapshot_models: list[TrainedModel]
    snapshot_stats: list[PerSampleStats]
    margins: np.ndarray
    correct: np.ndarray
    snapshot_epoch: int
    proxy_ids: tuple[str, ...]

    @property
    def k(self) -> int:
        """Number of proxies."""
        return len(self.models)

    @property
    def rank_matrix(self) -> RankMatrix:
        """Normalized loss ranks at the snapshot epoch."""
        return rank_matrix_from_losses([s.loss for s in self.snapshot_stats], self.proxy_ids, self.snapshot_epoch)


def train_proxy_ensemble(
    data: ObservedData,
    spec: ModelSpec,
    cfg: TrainConfig,
    k: int,
    *,
    snapshot_epoch: int | None = None,
    workers: int = 1,
) -> ProxyEnsemble:
    """Train ``k`` proxies from derived seeds and record their trajectories.

    Args:
        data: Observed training data; proxies never see ground truth.
        spec: Proxy architecture.
        cfg: Proxy hyperparameters; ``cfg.seed`` is the ensemble master seed.
        k: Number of proxies.
        snapshot_epoch: Epoch whose statistics define the ranks (default mid-training).
        workers: Proxies trained concurrently.

    Returns:
        The ensemble; results do not depend on ``workers``.
    """
    if k < 1:
        msg = f"need at least one proxy, got K={k}"
        raise ParameterError(msg)
    snap = max(1, cfg.epochs // 2) if snapshot_epoch is None else snapshot_epoch
    if not 1 <= snap <= cfg.epochs:
        msg = f"snapshot_epoch must be in [1, {cfg.epochs}], got {snap}"
        raise ParameterError(msg)

    def train_one(index: int) -> tuple[TrainedModel, TrainedModel, PerSampleStats, np.ndarray, np.ndarray]:
        margins = np.empty((data.n, cfg.epochs))
        correct = np.empty((data.n, cfg.epochs), dtype=bool)
        snapshot: list[tuple[TrainedModel, PerSampleStats]] = []

        def record(epoch: int, model: TrainedModel, epoch_stats: PerSampleStats) -> None:
            margins[:, epoch - 1] = epoch_stats.margin
            correct[:, epoch - 1] = epoch_stats.correct
            if epoch == snap:
                snapshot.append((model, epoch_stats))

        proxy_cfg = replace(cfg, seed=derive_seed(cfg.seed, "proxy", index))
        final = train(spec, proxy_cfg, data, epoch_hooks=[record])
        logger.info("proxy %d/%d trained (seed %d)", index + 1, k, proxy_cfg.seed)
        return final, snapshot[0][0], snapshot[0][1], margins, correct

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        results = list(pool.map(train_one, range(k)))

    return ProxyEnsemble(
        models=[r[0] for r in results],
        snapshot_models=[r[1] for r in results],
        snapshot_stats=[r[2] for r in results],
        margins=np.stack([r[3] for r in results]),
        correct=np.stack([r[4] for r in results]),
        snapshot_epoch=snap,
        proxy_ids=tuple(f"proxy_{i}" for i in range(k)),
    )


def save_ensemble(ensemble: ProxyEnsemble, directory: Path) -> None:
    """Write checkpoints and trajectories so scoring can run in a later process.

    Layout: ``proxy_<i>.json`` (final), ``snapshot_<i>.json`` and one
    ``trajectories.npz`` with margins, correctness and snapshot statistics.
    """
    directory.mkdir(parents=True, exist_ok=True)
    for index, (final, snapshot) in enumerate(zip(ensemble.models, ensemble.snapshot_models, strict=True)):
        final.save(directory / f"proxy_{index}.json")
        snapshot.save(directory / f"snapshot_{index}.json")
    np.savez_compressed(
        directory / ENSEMBLE_ARRAYS,
        margins=ensemble.margins,
        correct=ensemble.correct,
        snapshot_epoch=np.array(ensemble.snapshot_epoch),
        loss=np.stack([s.loss for s in ensemble.snapshot_stats]),
        margin=np.stack([s.margin for s in ensemble.snapshot_stats]),
        grad_norm=np.stack([s.grad_norm for s in ensemble.snapshot_stats]),
        snapshot_correct=np.stack([s.correct for s in ensemble.snapshot_stats]),
    )


def load_ensemble(directory: Path) -> ProxyEnsemble:
    """Read an ensemble written by save_ensemble.

    Raises:
        SchemaError: If files are missing or their shapes disagree.
    """
    try:
        with np.load(directory / ENSEMBLE_ARRAYS) as archive:
            arrays = dict(archive)
    except FileNotFoundError:
        msg = f"no {ENSEMBLE_ARRAYS} in {directory}"
        raise SchemaError(msg) from None
    except (KeyError, ValueError, OSError) as e:
        msg = f"unreadable {ENSEMBLE_ARRAYS} in {directory}: {e}"
        raise SchemaError(msg) from None
    missing = {"margins", "correct", "snapshot_epoch", "loss", "margin", "grad_norm", "snapshot_correct"} - set(arrays)
    if missing:
        msg = f"{ENSEMBLE_ARRAYS} lacks {', '.join(sorted(missing))}"
        raise SchemaError(msg)
    k = arrays["loss"].shape[0]
    if arrays["margins"].shape[0] != k:
        msg = f"trajectories cover {arrays['margins'].shape[0]} proxies, snapshots {k}"
        raise SchemaError(msg)
    stats_list = [
        PerSampleStats(arrays["loss"][i], arrays["margin"][i], arrays["grad_norm"][i], arrays["snapshot_correct"][i])
        for i in range(k)
    ]
    return ProxyEnsemble(
        models=[TrainedModel.load(directory / f"proxy_{i}.json") for i in range(k)],
        snapshot_models=[TrainedModel.load(directory / f"snapshot_{i}.json") for i in range(k)],
        snapshot_stats=stats_list,
        margins=arrays["margins"],
        correct=arrays["correct"].astype(bool),
        snapshot_epoch=int(arrays["snapshot_epoch"]),
        proxy_ids=tuple(f"proxy_{i}" for i in range(k)),
    )


def compute_scores(
    method: Method, ensemble: ProxyEnsemble, data: ObservedData, *, beta: float = 0.5, mix_k: float = 0.5
) -> ScoreVector | None:
    """Score every example for ``method``; None for methods that use no scores."""
    method = Method(method)
    if not method.needs_proxies:
        return None
    if method in (Method.DRIS_STATIC, Method.DRIS_ONLINE):
        return rank_variance(ensemble.rank_matrix)
    if method is Method.CONSENSUS:
        return consensus_mean_rank(ensemble.rank_matrix)
    if method is Method.EL2N:
        return el2n(ensemble.snapshot_models, data)
    if method is Method.FORGETTING:
        return forgetting_events(ensemble.correct)
    if method is Method.AUM:
        return aum(ensemble.margins[0])
    if method is Method.GRAD_NORM_IS:
        return magnitude_scores(ensemble.snapshot_stats, ScoreKind.GRAD_NORM)
    if method is Method.LOSS_IS:
        return magnitude_scores(ensemble.snapshot_stats, ScoreKind.LOSS)
    if method is Method.HYBRID:
        grad = magnitude_scores(ensemble.snapshot_stats, ScoreKind.GRAD_NORM)
        return hybrid(grad, rank_variance(ensemble.rank_matrix), beta)
    assert method is Method.UNIFORM_MIX
    return uniform_mix(rank_variance(ensemble.rank_matrix), mix_k)


def build_plan(
    method: Method, scores: ScoreVector | None, n: int, *, alpha: float, xi: float, seed: int
) -> SamplingPlan | None:
    """Selection (static methods) or sampling distribution (online methods); None for uniform SGD."""
    method = Method(method)
    if method is Method.UNIFORM_SGD:
        return None
    if method is Method.RANDOM:
        return select_random(n, alpha, seed)
    assert scores is not None
    if method is Method.AUM:
        return select_by_removal(scores, alpha)
    if method.is_static:
        return select_top_alpha(scores, alpha)
    if method is Method.UNIFORM_MIX:
        return proportional_distribution(scores)
    return online_distribution(scores, xi)


def target_schedule(plan: SamplingPlan | None, n: int, base_epochs: int, seed: int) -> tuple[int, EpochOrder]:
    """Target epochs and example order for a plan.

    Static subsets get step parity with ``base_epochs`` full passes; online
    plans and uniform SGD keep ``base_epochs`` passes over N draws.
    """
    if plan is None:
        return base_epochs, ShuffleOrder(n, seed)
    if plan.n != n:
        msg = f"plan covers {plan.n} examples, data has {n}"
        raise ParameterError(msg)
    if plan.mode is PlanMode.STATIC:
        assert plan.kept_indices is not None
        alpha = plan.alpha if plan.alpha is not None else plan.kept_indices.size / n
        return step_parity_epochs(base_epochs, alpha), ShuffleOrder(plan.kept_indices, seed)
    return base_epochs, ImportanceOrder(plan, seed)


def subset_corruption(plan: SamplingPlan | None, corrupt_mask: np.ndarray) -> float:
    """Corrupted fraction of a static subset, or corrupted probability mass of an online plan."""
    corrupt = np.asarray(corrupt_mask, dtype=bool)
    if plan is None:
        return float(corrupt.mean())
    if plan.mode is PlanMode.STATIC:
        assert plan.kept_indices is not None
        return float(corrupt[plan.kept_indices].mean())
    assert plan.probs is not None
    return float(plan.probs[corrupt].sum())


# --- Analysis helpers ---


@dataclass(frozen=True)
class PairedT:
    """Paired-difference summary."""

    n: int
    mean: float
    sd: float
    t: float
    p_two_sided: float
    degenerate: bool = False


def paired_t_from_summary(mean: float, sd: float, n: int) -> PairedT:
    """Paired t statistic from summary statistics of ``n`` differences.

    Zero spread gives ``t = +-inf, p = 0`` (or ``t = 0, p = 1`` for a zero
    mean) and is flagged as degenerate.
    """
    if n < 2:  # noqa: PLR2004
        msg = f"paired t needs at least 2 differences, got {n}"
        raise UndefinedStatisticError(msg)
    if sd == 0:
        if mean == 0:
            return PairedT(n, mean, sd, 0.0, 1.0, degenerate=True)
        return PairedT(n, mean, sd, math.copysign(math.inf, mean), 0.0, degenerate=True)
    t = mean / (sd / math.sqrt(n))
    p = float(2 * stats.t.sf(abs(t), df=n - 1))
    return PairedT(n, mean, sd, t, p)


def paired_t(deltas: Sequence[float] | np.ndarray) -> PairedT:
    """Paired t-test of per-seed differences (sample sd, n-1 degrees of freedom)."""
    values = np.asarray(deltas, dtype=np.float64)
    if values.size < 2:  # noqa: PLR2004
        msg = f"paired t needs at least 2 differences, got {values.size}"
        raise UndefinedStatisticError(msg)
    return paired_t_from_summary(float(values.mean()), float(values.std(ddof=1)), int(values.size))


def histogram_export(
    scores: ScoreVector | np.ndarray,
    corrupt_mask: np.ndarray,
    bins: int = 50,
    path: Path | None = None,
) -> ScoreHistogram:
    """Histogram clean and corrupted scores on shared edges.

    Rank-variance scores (and bare arrays) use the range [0, 0.25]; other
    kinds use the observed range. The bimodality summary is the fraction of
    corrupted examples below the clean 10th percentile and below the clean median.
    """
    if bins < 2:  # noqa: PLR2004
        msg = f"bins must be >= 2, got {bins}"
        raise ParameterError(msg)
    if isinstance(scores, ScoreVector):
        values, rank_scale = scores.values, scores.kind is ScoreKind.RANK_VARIANCE
    else:
        values, rank_scale = np.asarray(scores, dtype=np.float64), True
    mask = np.asarray(corrupt_mask, dtype=bool)
    if values.shape != mask.shape:
        msg = f"scores and mask lengths differ: {values.shape} vs {mask.shape}"
        raise ParameterError(msg)

    if rank_scale:
        lo, hi = 0.0, 0.25
    else:
        lo, hi = float(values.min()), float(values.max())
        if lo == hi:
            lo, hi = lo - 0.5, hi + 0.5
    edges = np.linspace(lo, hi, bins + 1)
    clipped = np.clip(values, lo, hi)
    clean_counts, _ = np.histogram(clipped[~mask], bins=edges)
    corrupt_counts, _ = np.histogram(clipped[mask], bins=edges)

    clean, corrupt = values[~mask], values[mask]
    if clean.size and corrupt.size:
        below_p10 = float(np.mean(corrupt < np.percentile(clean, 10)))
        below_median = float(np.mean(corrupt < np.median(clean)))
    else:
        below_p10 = below_median = math.nan

    histogram = ScoreHistogram(edges, clean_counts, corrupt_counts, below_p10, below_median)
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        pd.DataFrame(
            {
                "bin_left": edges[:-1],
                "bin_right": edges[1:],
                "clean_count": clean_counts,
                "corrupt_count": corrupt_counts,
            }
        ).to_csv(path, index=False, float_format="%.17g")
    return histogram


def planted_k_ablation(
    params: TheoremParams,
    ks: Sequence[int],
    seed: int,
    *,
    n_boundary: int | None = None,
    bins: int = 50,
) -> pd.DataFrame:
    """Rank disagreement of a planted population as the ensemble grows.

    One row per K with the empirical gap (clean minus corrupted mean sample
    variance), the fraction of corrupted examples below the clean median, and
    the fraction of bulk-corrupted examples below the boundary-clean median.
    """
    layout = PlantedLayout.from_params(params, n_boundary)
    rows = []
    for k in ks:
        variances = sample_rank_variance(sample_planted_ranks(params, layout, derive_rng(seed, "k-ablation", k), k=k))
        corrupt = layout.corrupt_mask
        hist = histogram_export(variances, corrupt, bins=bins)
        bulk = variances[layout.bulk_mask]
        if layout.n_boundary and bulk.size:
            bulk_below = float(np.mean(bulk < np.median(variances[layout.boundary_mask])))
        else:
            bulk_below = math.nan
        rows.append(
            {
                "K": k,
                "empirical_gap": float(variances[~corrupt].mean() - variances[corrupt].mean()),
                "corrupt_below_clean_median": hist.corrupt_below_clean_median,
                "bulk_below_boundary_median": bulk_below,
            }
        )
    return pd.DataFrame(rows, columns=list(ABLATION_COLUMNS))


# --- Experiment cells ---


def _boundary_mask(ensemble: ProxyEnsemble, corrupt: np.ndarray, fraction: float) -> np.ndarray:
    """Clean examples with the smallest mean absolute snapshot margin."""
    margin = np.mean([np.abs(s.margin) for s in ensemble.snapshot_stats], axis=0)
    clean_idx = np.flatnonzero(~corrupt)
    size = max(1, math.floor(fraction * clean_idx.size))
    closest = clean_idx[np.argsort(margin[clean_idx], kind="stable")[:size]]
    mask = np.zeros(corrupt.shape[0], dtype=bool)
    mask[closest] = True
    return mask


def _write_certificate(
    cfg: ExperimentConfig,
    ensemble: ProxyEnsemble,
    train_ds: LabeledDataset,
    histogram: ScoreHistogram | None,
    path: Path,
) -> None:
    payload: dict[str, Any] = {"snapshot_epoch": ensemble.snapshot_epoch, "K": ensemble.k}
    if histogram is not None:
        payload["bimodality"] = {
            "corrupt_below_clean_p10": histogram.corrupt_below_clean_p10,
            "corrupt_below_clean_median": histogram.corrupt_below_clean_median,
        }
    corrupt = train_ds.corrupt_mask
    if ensemble.k >= 2 and corrupt.any() and not corrupt.all():  # noqa: PLR2004
        estimate = estimate_assumption_params(
            ensemble.rank_matrix, corrupt, _boundary_mask(ensemble, corrupt, cfg.boundary_fraction)
        )
        payload["estimate"] = asdict(estimate)
        payload["flags"] = {
            "contamination_ok": estimate.contamination_ok,
            "concentration_ok": estimate.concentration_ok,
            "boundary_ok": estimate.boundary_ok,
        }
        if estimate.contamination_ok:
            params = estimate.to_params(train_ds.n, ensemble.k, cfg.delta, cfg.alpha)
            payload["certificate"] = separation_and_contamination(params).to_dict()
    else:
        payload["notes"] = ["assumption estimates need K >= 2 and both clean and corrupted examples"]
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2))


def _run_seed(cfg: ExperimentConfig, seed: int, cell_dir: Path | None) -> RunMetrics:
    """One (config, seed) cell; the only place ground truth meets the pipeline is metrics."""
    start = time.perf_counter()
    train_ds, test_ds = prepare_data(cfg, seed)
    observed = train_ds.observed
    corrupt = train_ds.corrupt_mask
    method = cfg.method
    logger.info("seed %d: %s on N=%d (corrupted %d)", seed, method, train_ds.n, int(corrupt.sum()))

    ensemble: ProxyEnsemble | None = None
    scores: ScoreVector | None = None
    if method.needs_proxies:
        proxy_spec = cfg.proxy_model.to_spec(train_ds.d, train_ds.num_classes)
        proxy_cfg = cfg.proxy_train.to_train_config(derive_seed(seed, "proxy"))
        ensemble = train_proxy_ensemble(
            observed,
            proxy_spec,
            proxy_cfg,
            cfg.proxies,
            snapshot_epoch=cfg.resolved_snapshot_epoch,
            workers=cfg.workers,
        )
        scores = compute_scores(method, ensemble, observed, beta=cfg.beta, mix_k=cfg.mix_k)

    plan = build_plan(method, scores, train_ds.n, alpha=cfg.alpha, xi=cfg.xi, seed=derive_seed(seed, "random-subset"))
    target_seed = derive_seed(seed, "target")
    epochs, order = target_schedule(plan, train_ds.n, cfg.target_train.epochs, target_seed)
    target_spec = cfg.target_model.to_spec(train_ds.d, train_ds.num_classes)
    try:
        target_cfg = cfg.target_train.to_train_config(target_seed, epochs=epochs)
        target = train(target_spec, target_cfg, observed, order=order)
    except DivergenceError as e:
        raise DivergenceError(e.epoch, seed=seed, reason=e.reason) from e

    # metrics: ground truth is read from here on
    frac_corrupt = subset_corruption(plan, corrupt)

    metrics = RunMetrics(
        method=method,
        seed=seed,
        test_accuracy=100.0 * accuracy(target, test_ds.clean_view),
        frac_corrupt_in_subset=frac_corrupt,
        mask_hash=mask_digest(corrupt),
    )
    if ensemble is not None:
        if corrupt.any():
            metrics.per_proxy_corr_train_acc = [accuracy(m, observed, corrupt) for m in ensemble.models]
        if ensemble.k >= 2 and corrupt.any() and not corrupt.all():  # noqa: PLR2004
            variances = sample_rank_variance(ensemble.rank_matrix.ranks)
            metrics.empirical_gap = float(variances[~corrupt].mean() - variances[corrupt].mean())

    if cell_dir is not None:
        cell_dir.mkdir(parents=True, exist_ok=True)
        (cell_dir / "mask.hash").write_text(metrics.mask_hash + "\n")
        if scores is not None:
            metrics.histogram = histogram_export(scores, corrupt, cfg.histogram_bins, cell_dir / "histogram.csv")
        if ensemble is not None:
            _write_certificate(cfg, ensemble, train_ds, metrics.histogram, cell_dir / "certificate.json")

    metrics.wall_seconds = time.perf_counter() - start
    logger.info("seed %d: test accuracy %.2f%%, frac corrupt %.4f", seed, metrics.test_accuracy, frac_corrupt)
    return metrics


def _metrics_row(
    cfg: ExperimentConfig,
    seed: int,
    metrics: RunMetrics | None,
    *,
    axis: str = "",
    axis_value: str = "",
    error: str = "",
) -> dict[str, Any]:
    row: dict[str, Any] = {
        "schema_version": METRICS_SCHEMA_VERSION,
        "method": str(cfg.method),
        "noise": str(cfg.noise.kind),
        "noise_rate": cfg.noise.rate,
        "axis": axis,
        "axis_value": axis_value,
        "seed": seed,
        "K": cfg.proxies if cfg.method.needs_proxies else 0,
        "alpha": cfg.alpha,
        "test_accuracy": math.nan,
        "frac_corrupt_in_subset": math.nan,
        "empirical_gap": math.nan,
        "per_proxy_corr_train_acc": "",
        "mask_hash": "",
        "status": "failed" if metrics is None else "ok",
        "error": error,
        "wall_seconds": math.nan,
    }
    if metrics is not None:
        row.update(
            test_accuracy=metrics.test_accuracy,
            frac_corrupt_in_subset=metrics.frac_corrupt_in_subset,
            empirical_gap=metrics.empirical_gap,
            per_proxy_corr_train_acc=";".join(f"{a:.6g}" for a in metrics.per_proxy_corr_train_acc),
            mask_hash=metrics.mask_hash,
            wall_seconds=metrics.wall_seconds,
        )
    return row


def _append_rows(path: Path, rows: list[dict[str, Any]]) -> None:
    """Append rows to metrics.csv, writing the header on first use."""
    path.parent.mkdir(parents=True, exist_ok=True)
    exists = path.exists() and path.stat().st_size > 0
    if exists:
        header = tuple(pd.read_csv(path, nrows=0).columns)
        if header != METRICS_COLUMNS:
            msg = f"{path} has a different metrics schema; choose another output_dir"
            raise SchemaError(msg, row=1)
    frame = pd.DataFrame(rows, columns=list(METRICS_COLUMNS))
    frame.to_csv(path, mode="a", header=not exists, index=False)


def run_experiment(cfg: ExperimentConfig, output_dir: Path) -> list[RunMetrics]:
    """Run ``cfg`` for every seed, appending one metrics.csv row per seed.

    Per-seed artifacts go to ``output_dir/seed_<s>/``. Rows already written are
    kept when a later seed fails.

    Raises:
        DivergenceError: Carrying the failing seed.
    """
    results = []
    for seed in cfg.seeds:
        metrics = _run_seed(cfg, seed, output_dir / f"seed_{seed}")
        _append_rows(output_dir / "metrics.csv", [_metrics_row(cfg, seed, metrics)])
        results.append(metrics)
    return results


def apply_axis(cfg: ExperimentConfig, axis: str, value: float) -> ExperimentConfig:
    """Copy of ``cfg`` with one sweep axis set to ``value``.

    Raises:
        ParameterError: If the axis is unknown, does not apply to the method,
            or the value is out of range.
    """
    updates: dict[str, Any]
    if axis == "K":
        updates = {"proxies": int(value)}
    elif axis == "alpha":
        updates = {"alpha": value}
    elif axis == "epsilon":
        kind = cfg.noise.kind if cfg.noise.kind is not NoiseKind.NONE else NoiseKind.UNIFORM
        updates = {"noise": {"kind": kind if value > 0 else cfg.noise.kind, "rate": value}}
    elif axis == "beta":
        updates = {"beta": value}
    elif axis == "k":
        updates = {"mix_k": value}
    else:
        msg = f"unknown sweep axis {axis!r}; choose from {', '.join(SWEEP_AXES)}"
        raise ParameterError(msg)
    try:
        return ExperimentConfig.model_validate({**cfg.model_dump(), **updates})
    except ValidationError as e:
        msg = f"{axis}={value}: {e.errors()[0]['msg']}"
        raise ParameterError(msg) from None


def _check_axis(cfg: ExperimentConfig, axis: str) -> None:
    needs = {"beta": Method.HYBRID, "k": Method.UNIFORM_MIX}
    if axis in needs and cfg.method is not needs[axis]:
        msg = f"axis {axis} only applies to method {needs[axis]}, not {cfg.method}"
        raise ParameterError(msg)
    if axis == "K" and not cfg.method.needs_proxies:
        msg = f"axis K does not apply to method {cfg.method}"
        raise ParameterError(msg)
    if axis not in SWEEP_AXES:
        msg = f"unknown sweep axis {axis!r}; choose from {', '.join(SWEEP_AXES)}"
        raise ParameterError(msg)


def sweep(cfg: ExperimentConfig, axis: str, values: Sequence[float], output_dir: Path) -> pd.DataFrame:
    """Run every (value, seed) cell of one axis, recording failures and continuing.

    Cells run on ``cfg.workers`` threads; rows are appended to metrics.csv in
    (value, seed) order as they complete.

    Returns:
        The rows written, in METRICS_COLUMNS order.
    """
    _check_axis(cfg, axis)
    cells: list[tuple[str, ExperimentConfig | None, str, int]] = []
    for value in values:
        label = f"{value:g}"
        try:
            cell_cfg: ExperimentConfig | None = apply_axis(cfg, axis, value)
            problem = ""
        except ParameterError as e:
            cell_cfg, problem = None, str(e)
        cells.extend((label, cell_cfg, problem, seed) for seed in cfg.seeds)

    def run_cell(cell: tuple[str, ExperimentConfig | None, str, int]) -> dict[str, Any]:
        label, cell_cfg, problem, seed = cell
        if cell_cfg is None:
            return _metrics_row(cfg, seed, None, axis=axis, axis_value=label, error=problem)
        try:
            metrics = _run_seed(cell_cfg, seed, output_dir / f"{axis}={label}" / f"seed_{seed}")
        except DrisError as e:
            logger.warning("%s=%s seed %d failed: %s", axis, label, seed, e)
            return _metrics_row(cell_cfg, seed, None, axis=axis, axis_value=label, error=str(e))
        return _metrics_row(cell_cfg, seed, metrics, axis=axis, axis_value=label)

    rows = []
    with ThreadPoolExecutor(max_workers=max(1, cfg.workers)) as pool:
        for row in pool.map(run_cell, cells):
            _append_rows(output_dir / "metrics.csv", [row])
            rows.append(row)
    return pd.DataFrame(rows, columns=list(METRICS_COLUMNS))


# --- Reporting ---


def read_metrics(paths: Sequence[Path]) -> pd.DataFrame:
    """Concatenate metrics.csv files after checking the frozen schema.

    Raises:
        SchemaError: If a file's columns or schema_version differ.
    """
    if not paths:
        msg = "no metrics files given"
        raise ParameterError(msg)
    frames = []
    for path in paths:
        try:
            frame = pd.read_csv(path, keep_default_na=False, na_values=["nan", "NaN", ""])
        except FileNotFoundError:
            msg = f"metrics file not found: {path}"
            raise SchemaError(msg) from None
        except pd.errors.EmptyDataError:
            msg = f"empty metrics file: {path}"
            raise SchemaError(msg) from None
        if tuple(frame.columns) != METRICS_COLUMNS:
            msg = f"{path} does not follow the metrics schema (columns {', '.join(map(str, frame.columns))})"
            raise SchemaError(msg, row=1)
        if not (frame["schema_version"] == METRICS_SCHEMA_VERSION).all():
            msg = f"{path} has an unsupported schema_version"
            raise SchemaError(msg)
        frames.append(frame)
    combined = pd.concat(frames, ignore_index=True)
    for column in ("axis", "axis_value", "error", "mask_hash", "per_proxy_corr_train_acc"):
        combined[column] = combined[column].fillna("").astype(str)
    return combined


def summarize_metrics(frame: pd.DataFrame, baseline: str | None = None) -> pd.DataFrame:
    """Mean and sample standard deviation per cell, with paired-t columns.

    Cells are (method, noise, noise_rate, axis, axis_value). A single seed gets
    std 0 and ``single_seed = True``. When ``baseline`` names a method present
    in ``frame``, each other cell gains paired-t statistics of its accuracy
    minus the baseline's on the same seeds. A cell and seed that appear more
    than once (a re-run appended to the same file) count once, by the last row.
    """
    ok = frame[frame["status"] == "ok"]
    repeated = ok.duplicated(subset=[*_GROUP_KEYS, "seed"], keep="last")
    if repeated.any():
        logger.warning("%d repeated metrics rows superseded by later runs", int(repeated.sum()))
        ok = ok[~repeated]
    grouped = ok.groupby(_GROUP_KEYS, sort=True, dropna=False)
    summary = grouped.agg(
        seeds=("seed", "nunique"),
        acc_mean=("test_accuracy", "mean"),
        acc_std=("test_accuracy", lambda s: float(s.std(ddof=1)) if len(s) > 1 else 0.0),
        frac_corrupt_mean=("frac_corrupt_in_subset", "mean"),
        frac_corrupt_std=("frac_corrupt_in_subset", lambda s: float(s.std(ddof=1)) if len(s) > 1 else 0.0),
        gap_mean=("empirical_gap", "mean"),
    ).reset_index()
    summary["single_seed"] = summary["seeds"] == 1

    if baseline is None:
        return summary
    if baseline not in set(ok["method"]):
        logger.warning("baseline method %s not found; paired-t columns omitted", baseline)
        return summary

    base = ok[ok["method"] == baseline].set_index(["noise", "noise_rate", "axis", "axis_value", "seed"])
    records = []
    for _, cell in summary.iterrows():
        record = {"delta_mean": math.nan, "delta_sd": math.nan, "t": math.nan, "p": math.nan, "t_flag": ""}
        if cell["method"] != baseline:
            rows = ok[(ok[_GROUP_KEYS] == cell[_GROUP_KEYS]).all(axis=1)]
            deltas = []
            for _, row in rows.iterrows():
                key = (row["noise"], row["noise_rate"], row["axis"], row["axis_value"], row["seed"])
                if key in base.index:
                    deltas.append(row["test_accuracy"] - float(base.loc[key, "test_accuracy"]))
            if len(deltas) >= 2:  # noqa: PLR2004
                result = paired_t(deltas)
                record.update(
                    delta_mean=result.mean,
                    delta_sd=result.sd,
                    t=result.t,
                    p=result.p_two_sided,
                    t_flag="zero-variance" if result.degenerate else "",
                )
        records.append(record)
    return pd.concat([summary, pd.DataFrame(records, index=summary.index)], axis=1)
