# Copyright (c) 2025 DR-IS contributors
# SPDX-License-Identifier: MIT

"""Closed-form separation certificates and their planted-rank Monte-Carlo checks.

This module handles:
- concentration radius, bulk-corrupted threshold and boundary lower bound
- the structural gap, separation verdict and tail-contamination cap
- mass bounds for magnitude-proportional sampling
- the AUROC lower bound for margin-averaged scores, plus a Gaussian simulator
- planted rank laws, Monte-Carlo verification and assumption diagnostics
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
import logging
import math
from typing import Any

import numpy as np

from dris.utils.rng import derive_rng, floor_count

from .errors import DegenerateDistributionError, ParameterError, UndefinedStatisticError
from .models import RankMatrix, ScoreKind, ScoreVector
from .sampler import select_top_alpha
from .scores import sample_rank_variance


__all__ = [
    "AssumptionEstimate",
    "AurocSimulation",
    "CertificateReport",
    "MagnitudeMassReport",
    "MonteCarloSummary",
    "PlantedLayout",
    "TheoremParams",
    "aum_auroc_bound",
    "boundary_lower",
    "contamination_cap",
    "delta_prime",
    "estimate_assumption_params",
    "magnitude_mass_bounds",
    "mcdiarmid_radius",
    "planted_rank_montecarlo",
    "sample_planted_ranks",
    "separation_and_contamination",
    "simulate_aum_auroc",
    "theta_star",
]

logger = logging.getLogger(__name__)

# Largest variance of a [0, 1]-valued rank
MAX_RANK_VARIANCE = 0.25
_COMPARE_TOL = 1e-12


@dataclass(frozen=True)
class TheoremParams:
    """Inputs of the separation certificate."""

    n: int
    k: int
    delta: float
    tau: float = 0.0
    gamma: float = 0.0
    tau_bdry: float = 0.0
    alpha_trim: float = 0.0
    epsilon: float = 0.0
    alpha: float = 1.0
    v_tail: float = 0.0

    def __post_init__(self) -> None:
        """Validate ranges."""
        checks = [
            (self.n >= 1, f"N must be >= 1, got {self.n}"),
            (self.k >= 1, f"K must be >= 1, got {self.k}"),
            (0 < self.delta < 1, f"delta must be in (0, 1), got {self.delta}"),
            (0 <= self.tau <= 1, f"tau must be in [0, 1], got {self.tau}"),
            (0 <= self.gamma <= 1, f"gamma must be in [0, 1], got {self.gamma}"),
            (self.tau_bdry >= 0, f"tau_bdry must be >= 0, got {self.tau_bdry}"),
            (0 <= self.alpha_trim < 1, f"alpha_trim must be in [0, 1), got {self.alpha_trim}"),
            (0 <= self.epsilon < 0.5, f"epsilon must be in [0, 0.5), got {self.epsilon}"),  # noqa: PLR2004
            (0 < self.alpha <= 1, f"alpha must be in (0, 1], got {self.alpha}"),
            (self.v_tail >= 0, f"v_tail must be >= 0, got {self.v_tail}"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ParameterError(msg)

    @property
    def shrink(self) -> float:
        """``1 - 1/K``: expected-to-population variance factor."""
        return 1.0 - 1.0 / self.k

    @property
    def bulk_variance(self) -> float:
        """``tau^2/4 + gamma``: variance ceiling of a concentrated corrupted example."""
        return self.tau**2 / 4 + self.gamma


def mcdiarmid_radius(n: int, k: int, delta: float) -> float:
    """Uniform deviation radius ``sqrt(log(2N/delta) / (2K))`` of the sample variances.

    Raises:
        ParameterError: If delta is outside (0, 1) or N, K < 1.
    """
    if not 0 < delta < 1:
        msg = f"delta must be in (0, 1), got {delta}"
        raise ParameterError(msg)
    if n < 1 or k < 1:
        msg = f"N and K must be >= 1, got N={n}, K={k}"
        raise ParameterError(msg)
    return math.sqrt(math.log(2 * n / delta) / (2 * k))


def theta_star(params: TheoremParams) -> float:
    """Threshold every bulk-corrupted sample variance stays below."""
    return params.shrink * params.bulk_variance + mcdiarmid_radius(params.n, params.k, params.delta)


def boundary_lower(params: TheoremParams) -> float:
    """Lower bound on every boundary-clean sample variance."""
    return params.shrink * params.tau_bdry**2 - mcdiarmid_radius(params.n, params.k, params.delta)


def delta_prime(params: TheoremParams) -> float:
    """Structural gap between boundary-clean and bulk-corrupted expected variances."""
    return params.shrink * (params.tau_bdry**2 - params.bulk_variance)


def contamination_cap(params: TheoremParams) -> float:
    """Largest fraction of the kept subset the escaping tail can occupy, in [0, 1]."""
    if params.v_tail == 0:
        ratio = 0.0
    elif params.bulk_variance == 0:
        ratio = 1.0
    else:
        ratio = min(1.0, params.v_tail / params.bulk_variance)
    cap = params.alpha_trim * params.epsilon / params.alpha * ratio
    return min(1.0, max(0.0, cap))


@dataclass
class CertificateReport:
    """Evaluated certificate with its inputs."""

    params: TheoremParams
    mcdiarmid_radius: float
    theta_star: float
    bdry_lower: float
    delta_prime: float
    separated: bool
    boundary_covers_subset: bool
    subset_certified: bool
    contamination_cap: float
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        """JSON-ready dict with the inputs echoed under ``params``."""
        return asdict(self)


def separation_and_contamination(
    params: TheoremParams, *, boundary_covers_subset: bool = False
) -> CertificateReport:
    """Evaluate every certificate quantity for ``params``.

    Args:
        params: Certificate inputs.
        boundary_covers_subset: Caller asserts that the boundary-clean set has
            at least ``alpha * N`` members; the subset guarantee needs it.

    Returns:
        The full report. ``separated`` is ``delta_prime > 2 * radius``;
        ``subset_certified`` additionally requires the boundary assertion.
    """
    radius = mcdiarmid_radius(params.n, params.k, params.delta)
    gap = delta_prime(params)
    separated = gap > 2 * radius
    notes: list[str] = []
    threshold = theta_star(params)
    if threshold >= MAX_RANK_VARIANCE:
        notes.append(f"theta* = {threshold:.6g} >= 0.25: the bulk bound is vacuous at K={params.k}")
    if not separated:
        if gap > 0:
            needed = math.ceil(math.log(2 * params.n / params.delta) / (2 * (gap / 2) ** 2))
            hint = f"; radius drops below delta'/2 at K >= {needed}"
        else:
            hint = "; the structural gap is not positive"
        notes.append(f"delta' = {gap:.6g} <= 2 * radius = {2 * radius:.6g}{hint}")
    if separated and not boundary_covers_subset:
        notes.append("boundary coverage |D_bdry| >= alpha*N not asserted; subset guarantee withheld")
    return CertificateReport(
        params=params,
        mcdiarmid_radius=radius,
        theta_star=threshold,
        bdry_lower=boundary_lower(params),
        delta_prime=gap,
        separated=separated,
        boundary_covers_subset=boundary_covers_subset,
        subset_certified=separated and boundary_covers_subset,
        contamination_cap=contamination_cap(params),
        notes=notes,
    )


# --- Magnitude sampling ---


@dataclass(frozen=True)
class MagnitudeMassReport:
    """Corrupted probability mass under score-proportional sampling and its lower bounds."""

    corrupted_mass: float
    lower_bound: float
    ratio: float
    ratio_lower: float
    epsilon: float

    @property
    def holds(self) -> bool:
        """Both lower bounds are respected."""
        mass_ok = self.corrupted_mass + _COMPARE_TOL >= self.lower_bound
        ratio_ok = self.ratio >= self.ratio_lower or math.isclose(self.ratio, self.ratio_lower, rel_tol=_COMPARE_TOL)
        return mass_ok and ratio_ok


def magnitude_mass_bounds(scores: ScoreVector | np.ndarray, corrupt_mask: np.ndarray) -> MagnitudeMassReport:
    """Mass that ``p_i ∝ s_i`` puts on corrupted examples, with its guarantees.

    The mass is at least ``eps * min_corr(s) / max(s)`` and the corrupted to
    clean mass ratio is at least ``eps/(1-eps) * min_corr(s) / mean_clean(s)``.

    Raises:
        ParameterError: If scores are negative or lengths differ.
        DegenerateDistributionError: If every score is zero.
        UndefinedStatisticError: If the corrupt or clean set is empty.
    """
    values = scores.values if isinstance(scores, ScoreVector) else np.asarray(scores, dtype=np.float64)
    mask = np.asarray(corrupt_mask, dtype=bool)
    if values.shape != mask.shape:
        msg = f"scores and mask lengths differ: {values.shape} vs {mask.shape}"
        raise ParameterError(msg)
    if np.any(values < 0):
        msg = "magnitude scores must be nonnegative"
        raise ParameterError(msg)
    total = float(values.sum())
    if total == 0:
        msg = "all scores are zero; proportional sampling is undefined"
        raise DegenerateDistributionError(msg)
    if not mask.any() or mask.all():
        msg = "mass bounds need nonempty corrupt and clean sets"
        raise UndefinedStatisticError(msg)

    eps = float(mask.mean())
    corr_sum, clean_sum = float(values[mask].sum()), float(values[~mask].sum())
    s_min_corr = float(values[mask].min())
    clean_mean = float(values[~mask].mean())
    if clean_sum == 0:
        ratio, ratio_lower = math.inf, (math.inf if s_min_corr > 0 else 0.0)
    else:
        ratio = corr_sum / clean_sum
        ratio_lower = eps / (1 - eps) * s_min_corr / clean_mean
    return MagnitudeMassReport(
        corrupted_mass=corr_sum / total,
        lower_bound=eps * s_min_corr / float(values.max()),
        ratio=ratio,
        ratio_lower=ratio_lower,
        epsilon=eps,
    )


# --- AUROC of margin-averaged scores ---


def aum_auroc_bound(delta0: float, sigma: float, nu: float, *, marginal_only: bool = False) -> float:
    """Lower bound on P(clean AUM > corrupted AUM).

    ``1 - exp(-delta0^2 / (4 sigma^2 + 2 nu^2))``; with ``marginal_only`` the
    noise term is ``8 nu^2`` (per-example rather than pairwise concentration).

    Raises:
        ParameterError: On negative inputs, or all-zero inputs.
    """
    if delta0 < 0 or sigma < 0 or nu < 0:
        msg = f"delta0, sigma and nu must be >= 0, got {delta0}, {sigma}, {nu}"
        raise ParameterError(msg)
    denom = 4 * sigma**2 + (8 if marginal_only else 2) * nu**2
    if denom == 0:
        if delta0 == 0:
            msg = "AUROC bound is undefined when delta0, sigma and nu are all zero"
            raise ParameterError(msg)
        return 1.0
    return 1.0 - math.exp(-(delta0**2) / denom)


@dataclass(frozen=True)
class AurocSimulation:
    """Empirical ranking probability next to its bound."""

    empirical: float
    std_error: float
    bound: float
    pairs: int

    @property
    def dominates(self) -> bool:
        """Empirical probability is no more than 3 standard errors below the bound."""
        return self.empirical >= self.bound - 3 * self.std_error


def simulate_aum_auroc(delta0: float, sigma: float, nu: float, pairs: int, seed: int) -> AurocSimulation:
    """Estimate P(A_clean > A_corr) for Gaussian AUMs.

    Population AUMs sit at ``+-delta0/2`` with spread ``sigma``; each run adds
    independent trajectory noise of std ``nu / sqrt(2)`` so the pair difference
    has noise std ``nu``.
    """
    aum_auroc_bound(delta0, sigma, nu)  # validates
    if pairs < 1:
        msg = f"pairs must be >= 1, got {pairs}"
        raise ParameterError(msg)
    rng = derive_rng(seed, "auroc-simulation")
    noise = nu / math.sqrt(2)
    clean = delta0 / 2 + sigma * rng.standard_normal(pairs) + noise * rng.standard_normal(pairs)
    corrupt = -delta0 / 2 + sigma * rng.standard_normal(pairs) + noise * rng.standard_normal(pairs)
    p = float(np.mean(clean > corrupt))
    return AurocSimulation(
        empirical=p,
        std_error=math.sqrt(max(p * (1 - p), 1.0 / pairs) / pairs),
        bound=aum_auroc_bound(delta0, sigma, nu),
        pairs=pairs,
    )


# --- Planted rank model ---


@dataclass(frozen=True)
class PlantedLayout:
    """Block sizes of a planted population, in index order bulk, tail, boundary, easy."""

    n_bulk: int
    n_tail: int
    n_boundary: int
    n_easy: int

    @classmethod
    def from_params(cls, params: TheoremParams, n_boundary: int | None = None) -> PlantedLayout:
        """Split N by epsilon and alpha_trim; the boundary defaults to alpha * N examples."""
        n_corrupt = floor_count(params.epsilon, params.n)
        n_tail = floor_count(params.alpha_trim, n_corrupt)
        n_clean = params.n - n_corrupt
        boundary = floor_count(params.alpha, params.n) if n_boundary is None else n_boundary
        if not 0 <= boundary <= n_clean:
            msg = f"n_boundary must be in [0, {n_clean}], got {boundary}"
            raise ParameterError(msg)
        return cls(n_corrupt - n_tail, n_tail, boundary, n_clean - boundary)

    @property
    def n(self) -> int:
        """Total examples."""
        return self.n_bulk + self.n_tail + self.n_boundary + self.n_easy

    def _mask(self, start: int, size: int) -> np.ndarray:
        mask = np.zeros(self.n, dtype=bool)
        mask[start : start + size] = True
        return mask

    @property
    def bulk_mask(self) -> np.ndarray:
        """Bulk-corrupted examples."""
        return self._mask(0, self.n_bulk)

    @property
    def tail_mask(self) -> np.ndarray:
        """Escaping-tail corrupted examples."""
        return self._mask(self.n_bulk, self.n_tail)

    @property
    def corrupt_mask(self) -> np.ndarray:
        """All corrupted examples."""
        return self._mask(0, self.n_bulk + self.n_tail)

    @property
    def boundary_mask(self) -> np.ndarray:
        """Boundary-clean examples."""
        return self._mask(self.n_bulk + self.n_tail, self.n_boundary)


def _two_point(rng: np.random.Generator, half_width: float, shape: tuple[int, int]) -> np.ndarray:
    signs = rng.integers(0, 2, size=shape) * 2 - 1
    return 0.5 + half_width * signs


def _check_planted_laws(params: TheoremParams) -> None:
    if params.tau_bdry > 0.5:  # noqa: PLR2004
        msg = f"tau_bdry^2 = {params.tau_bdry**2:.4g} exceeds the largest rank variance 0.25"
        raise ParameterError(msg)
    if params.v_tail > MAX_RANK_VARIANCE:
        msg = f"v_tail = {params.v_tail:.4g} exceeds the largest rank variance 0.25"
        raise ParameterError(msg)


def sample_planted_ranks(
    params: TheoremParams,
    layout: PlantedLayout,
    rng: np.random.Generator,
    k: int | None = None,
    easy_high: float = 1.0,
) -> np.ndarray:
    """Draw an N x K rank array, each row i.i.d. across columns from its block's law.

    Bulk corrupted rows are uniform on ``[1-tau, 1]`` with probability
    ``1-gamma`` and uniform on ``[0, 1-tau)`` otherwise. Boundary rows are
    two-point ``1/2 +- tau_bdry`` and tail rows two-point ``1/2 +- sqrt(v_tail)``,
    so their variances are exactly ``tau_bdry^2`` and ``v_tail``. Easy clean
    rows are uniform on ``[0, easy_high]``.

    Raises:
        ParameterError: If ``tau_bdry`` or ``sqrt(v_tail)`` exceeds 1/2.
    """
    k = params.k if k is None else k
    _check_planted_laws(params)
    if not 0 < easy_high <= 1:
        msg = f"easy_high must be in (0, 1], got {easy_high}"
        raise ParameterError(msg)

    shape = (layout.n_bulk, k)
    high = rng.uniform(1 - params.tau, 1.0, size=shape)
    low = rng.uniform(0.0, 1 - params.tau, size=shape)
    bulk = np.where(rng.random(size=shape) < params.gamma, low, high)
    tail = _two_point(rng, math.sqrt(params.v_tail), (layout.n_tail, k))
    boundary = _two_point(rng, params.tau_bdry, (layout.n_boundary, k))
    easy = rng.uniform(0.0, easy_high, size=(layout.n_easy, k))
    return np.vstack([bulk, tail, boundary, easy])


@dataclass
class MonteCarloSummary:
    """Violation frequencies of the certificate over planted trials."""

    trials: int
    report: CertificateReport
    bulk_violation_rate: float
    boundary_violation_rate: float
    joint_violation_rate: float
    violation_allowance: float
    max_bulk_in_subset: int
    max_tail_fraction: float
    boundary_mean_variance: float
    boundary_variance_std_error: float

    @property
    def passed(self) -> bool:
        """Joint violations within allowance and, when certified, a clean subset in every trial."""
        ok = self.joint_violation_rate <= self.violation_allowance
        if self.report.subset_certified:
            ok = ok and self.max_bulk_in_subset == 0
            ok = ok and self.max_tail_fraction <= self.report.contamination_cap + _COMPARE_TOL
        return ok

    def to_dict(self) -> dict[str, Any]:
        """JSON-ready dict."""
        payload = asdict(self)
        payload["passed"] = self.passed
        return payload


@dataclass(frozen=True)
class _TrialResult:
    bulk_violation: bool
    boundary_violation: bool
    bulk_in_subset: int
    tail_fraction: float
    boundary_mean_variance: float


def _run_trial(params: TheoremParams, layout: PlantedLayout, seed: int, trial: int) -> _TrialResult:
    rng = derive_rng(seed, "planted-trial", trial)
    variances = sample_rank_variance(sample_planted_ranks(params, layout, rng))
    bulk, tail, bdry = layout.bulk_mask, layout.tail_mask, layout.boundary_mask
    kept = select_top_alpha(ScoreVector(variances, ScoreKind.RANK_VARIANCE), params.alpha).kept_indices
    assert kept is not None
    return _TrialResult(
        bulk_violation=bool(np.any(variances[bulk] > theta_star(params))),
        boundary_violation=bool(np.any(variances[bdry] < boundary_lower(params))),
        bulk_in_subset=int(bulk[kept].sum()),
        tail_fraction=float(tail[kept].mean()) if kept.size else 0.0,
        boundary_mean_variance=float(variances[bdry].mean()) if bdry.any() else math.nan,
    )


def planted_rank_montecarlo(
    params: TheoremParams,
    trials: int,
    seed: int,
    *,
    n_boundary: int | None = None,
    workers: int = 1,
) -> MonteCarloSummary:
    """Check the certificate against ``trials`` planted K-proxy rank draws.

    Each trial uses its own derived stream, so results are identical for any
    worker count.

    Args:
        params: Certificate inputs; also parameterize the planted laws.
        trials: Number of independent rank matrices.
        seed: Master seed.
        n_boundary: Boundary block size (default ``floor(alpha * N)``).
        workers: Threads evaluating trials.

    Returns:
        Violation rates, subset contamination extremes and the boundary mean variance.
    """
    if trials < 1:
        msg = f"trials must be >= 1, got {trials}"
        raise ParameterError(msg)
    layout = PlantedLayout.from_params(params, n_boundary)
    covers = layout.n_boundary >= floor_count(params.alpha, params.n)
    report = separation_and_contamination(params, boundary_covers_subset=covers)
    _check_planted_laws(params)

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        results = list(pool.map(lambda t: _run_trial(params, layout, seed, t), range(trials)))

    bulk_viol = np.array([r.bulk_violation for r in results])
    bdry_viol = np.array([r.boundary_violation for r in results])
    bdry_means = np.array([r.boundary_mean_variance for r in results])
    allowance = params.delta + 3 * math.sqrt(params.delta * (1 - params.delta) / trials)
    summary = MonteCarloSummary(
        trials=trials,
        report=report,
        bulk_violation_rate=float(bulk_viol.mean()),
        boundary_violation_rate=float(bdry_viol.mean()),
        joint_violation_rate=float((bulk_viol | bdry_viol).mean()),
        violation_allowance=allowance,
        max_bulk_in_subset=max(r.bulk_in_subset for r in results),
        max_tail_fraction=max(r.tail_fraction for r in results),
        boundary_mean_variance=float(np.mean(bdry_means)) if layout.n_boundary else math.nan,
        boundary_variance_std_error=(
            float(np.std(bdry_means, ddof=1) / math.sqrt(trials)) if layout.n_boundary and trials > 1 else math.nan
        ),
    )
    logger.info(
        "planted Monte-Carlo: %d trials, joint violation rate %.4f (allowance %.4f)",
        trials,
        summary.joint_violation_rate,
        allowance,
    )
    return summary


# --- Diagnostics ---


@dataclass(frozen=True)
class AssumptionEstimate:
    """Empirical counterparts of the certificate parameters."""

    tau: float
    gamma: float
    tau_bdry_sq: float
    v_tail: float
    empirical_gap: float
    epsilon: float
    alpha_trim: float

    @property
    def contamination_ok(self) -> bool:
        """Corruption rate below the breakdown point."""
        return self.epsilon < 0.5  # noqa: PLR2004

    @property
    def concentration_ok(self) -> bool:
        """Corrupted ranks concentrate in the upper half."""
        return self.tau <= 0.5  # noqa: PLR2004

    @property
    def boundary_ok(self) -> bool:
        """Boundary disagreement exceeds the bulk-corrupted ceiling."""
        return self.tau_bdry_sq > self.tau**2 / 4 + self.gamma

    def to_params(self, n: int, k: int, delta: float, alpha: float) -> TheoremParams:
        """Certificate inputs built from the estimates."""
        return TheoremParams(
            n=n,
            k=k,
            delta=delta,
            tau=self.tau,
            gamma=self.gamma,
            tau_bdry=math.sqrt(self.tau_bdry_sq),
            alpha_trim=self.alpha_trim,
            epsilon=self.epsilon,
            alpha=alpha,
            v_tail=self.v_tail,
        )


def estimate_assumption_params(
    ranks: RankMatrix | np.ndarray,
    corrupt_mask: np.ndarray,
    bdry_mask: np.ndarray,
    *,
    alpha_trim: float = 0.0,
    gamma: float = 0.05,
) -> AssumptionEstimate:
    """Estimate the certificate parameters from a rank matrix and ground truth.

    The corrupted set is trimmed by empirical sample variance: the least
    variant ``1 - alpha_trim`` fraction is the bulk, the rest the tail. ``tau``
    is one minus the ``gamma``-quantile of the pooled bulk ranks.

    Raises:
        UndefinedStatisticError: If the corrupt, clean or boundary set is empty.
    """
    values = ranks.ranks if isinstance(ranks, RankMatrix) else np.asarray(ranks, dtype=np.float64)
    corrupt = np.asarray(corrupt_mask, dtype=bool)
    bdry = np.asarray(bdry_mask, dtype=bool)
    if not corrupt.any():
        msg = "assumption estimates need at least one corrupted example"
        raise UndefinedStatisticError(msg)
    if corrupt.all():
        msg = "assumption estimates need at least one clean example"
        raise UndefinedStatisticError(msg)
    if not bdry.any():
        msg = "boundary mask selects no examples"
        raise UndefinedStatisticError(msg)
    if not 0 <= alpha_trim < 1:
        msg = f"alpha_trim must be in [0, 1), got {alpha_trim}"
        raise ParameterError(msg)

    variances = sample_rank_variance(values)
    corrupt_idx = np.flatnonzero(corrupt)
    by_variance = corrupt_idx[np.argsort(variances[corrupt_idx], kind="stable")]
    n_tail = floor_count(alpha_trim, corrupt_idx.size)
    bulk_idx, tail_idx = by_variance[: by_variance.size - n_tail], by_variance[by_variance.size - n_tail :]

    pooled = values[bulk_idx].ravel()
    tau = float(1.0 - np.quantile(pooled, gamma))
    gamma_hat = float(np.mean(pooled < 1.0 - tau))
    return AssumptionEstimate(
        tau=max(0.0, tau),
        gamma=gamma_hat,
        tau_bdry_sq=float(np.median(variances[bdry])),
        v_tail=float(variances[tail_idx].mean()) if tail_idx.size else 0.0,
        empirical_gap=float(variances[~corrupt].mean() - variances[corrupt].mean()),
        epsilon=float(corrupt.mean()),
        alpha_trim=alpha_trim,
    )
