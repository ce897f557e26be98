# Copyright (c) 2025 DR-IS contributors
# SPDX-License-Identifier: MIT

"""Tests for rank-disagreement and baseline scores."""

from __future__ import annotations

import itertools
from pathlib import Path

import numpy as np
import pytest

from dris.core.errors import IngestionError, ParameterError
from dris.core.learners import TrainedModel
from dris.core.models import ModelKind, ModelSpec, ObservedData, RankMatrix, ScoreKind, ScoreVector
from dris.core.scores import (
    aum,
    consensus_mean_rank,
    el2n,
    forgetting_events,
    hybrid,
    normalized_ranks,
    rank_matrix_from_losses,
    rank_variance,
    read_rank_matrix,
    read_scores,
    sample_rank_variance,
    write_rank_matrix,
    write_scores,
)


def _rm(rows: list[list[float]]) -> RankMatrix:
    ranks = np.array(rows)
    return RankMatrix(ranks, tuple(f"p{i}" for i in range(ranks.shape[1])))


class TestNormalizedRanks:
    """Tests for normalized_ranks."""

    def test_hand_sorted(self) -> None:
        """Ascending loss gets ascending rank."""
        np.testing.assert_allclose(normalized_ranks(np.array([0.3, 0.1, 0.2])), [1.0, 1 / 3, 2 / 3])

    def test_single(self) -> None:
        """One example has rank 1."""
        np.testing.assert_array_equal(normalized_ranks(np.array([5.0])), [1.0])

    def test_ties_by_index(self) -> None:
        """Equal losses rank in index order."""
        np.testing.assert_allclose(normalized_ranks(np.zeros(4)), [0.25, 0.5, 0.75, 1.0])

    def test_nan_rejected(self) -> None:
        """NaN losses cannot be ranked."""
        with pytest.raises(ParameterError, match="finite"):
            normalized_ranks(np.array([0.1, np.nan]))

    def test_monotone_invariance(self) -> None:
        """Strictly increasing transforms of the losses leave the score alone."""
        rng = np.random.default_rng(0)
        losses = [rng.exponential(size=30) for _ in range(4)]
        ids = ["a", "b", "c", "d"]
        base = rank_variance(rank_matrix_from_losses(losses, ids))
        transformed = rank_variance(rank_matrix_from_losses([np.log1p(loss) ** 3 for loss in losses], ids))
        np.testing.assert_array_equal(base.values, transformed.values)


class TestRankVariance:
    """Tests for rank_variance and its invariants."""

    def test_constant_row(self) -> None:
        """Agreeing proxies give zero variance."""
        assert rank_variance(_rm([[0.5, 0.5, 0.5]])).values[0] == 0.0

    def test_extremal_row(self) -> None:
        """Values at 0 and 1 reach the 1/4 maximum."""
        assert sample_rank_variance(np.array([[0.0, 1.0]]))[0] == pytest.approx(0.25)

    def test_hand_arithmetic(self) -> None:
        """Biased variance of [0.2, 0.5, 0.8] is 0.06."""
        scores = rank_variance(_rm([[0.2, 0.5, 0.8]]))
        assert scores.values[0] == pytest.approx(0.06)
        assert scores.kind is ScoreKind.RANK_VARIANCE

    def test_needs_two_proxies(self) -> None:
        """One proxy has no disagreement to measure."""
        with pytest.raises(ParameterError, match="K >= 2"):
            rank_variance(_rm([[0.5]]))

    @pytest.mark.parametrize("k", [2, 3, 4])
    def test_bounded_differences(self, k: int) -> None:
        """Replacing one rank moves the variance by at most (K-1)/K^2, and the grid reaches it."""
        grid = [0.0, 0.1, 0.4, 0.7, 1.0]
        bound = (k - 1) / k**2
        worst = 0.0
        for row in itertools.product(grid, repeat=k):
            base = float(sample_rank_variance(np.array([row]))[0])
            for value in grid:
                changed = (value, *row[1:])
                worst = max(worst, abs(float(sample_rank_variance(np.array([changed]))[0]) - base))
        assert worst <= bound + 1e-12
        assert worst == pytest.approx(bound, abs=1e-12)

    def test_bounded_differences_pair(self) -> None:
        """With two proxies the worst single change is 1/4, moving (0, 1) to (1, 1)."""
        before, after = sample_rank_variance(np.array([[0.0, 1.0], [1.0, 1.0]]))
        assert before - after == pytest.approx(1 / 4)

    @pytest.mark.parametrize("k", [2, 4, 16])
    @pytest.mark.parametrize(
        ("law", "law_variance"),
        [
            ("uniform", 1 / 12),
            ("beta", 2 * 5 / (7**2 * 8)),
            ("two-point", 0.3 * 0.7),
        ],
    )
    def test_expected_sample_variance(self, k: int, law: str, law_variance: float) -> None:
        """Mean sample variance converges to (1 - 1/K) times the rank law variance."""
        rng = np.random.default_rng(42)
        m = 20000
        if law == "uniform":
            draws = rng.uniform(0.0, 1.0, size=(m, k))
        elif law == "beta":
            draws = rng.beta(2.0, 5.0, size=(m, k))
        else:
            draws = (rng.uniform(size=(m, k)) < 0.3).astype(np.float64)
        variances = sample_rank_variance(draws)
        expected = (1 - 1 / k) * law_variance
        std_error = variances.std(ddof=1) / np.sqrt(m)
        assert abs(variances.mean() - expected) <= 3 * std_error

    def test_always_in_popoviciu_range(self) -> None:
        """Rank variance never leaves [0, 1/4]."""
        rng = np.random.default_rng(1)
        losses = [rng.normal(size=50) for _ in range(6)]
        values = rank_variance(rank_matrix_from_losses(losses, list("abcdef"))).values
        assert values.min() >= 0
        assert values.max() <= 0.25


class TestBaselines:
    """Tests for consensus, EL2N, forgetting, AUM and hybrid."""

    def test_consensus_mean(self) -> None:
        """Consensus is the mean rank."""
        np.testing.assert_allclose(consensus_mean_rank(_rm([[0.2, 0.4], [1.0, 1.0]])).values, [0.3, 1.0])

    def test_el2n_coin_flip(self) -> None:
        """Uniform probabilities on two classes give sqrt(1/2)."""
        spec = ModelSpec(ModelKind.LINEAR_SOFTMAX, 1, 2)
        model = TrainedModel(spec, np.zeros(spec.num_params))
        data = ObservedData(np.array([[1.0]]), np.array([0]), 2)
        assert el2n([model], data).values[0] == pytest.approx(0.70710678)

    def test_el2n_is_ensemble_mean(self) -> None:
        """EL2N averages the per-proxy error norms."""
        spec = ModelSpec(ModelKind.LINEAR_SOFTMAX, 1, 2)
        flat = TrainedModel(spec, np.zeros(spec.num_params))
        confident = TrainedModel(spec, np.array([5.0, -5.0, 0.0, 0.0]))
        data = ObservedData(np.array([[1.0]]), np.array([0]), 2)
        expected = (el2n([flat], data).values[0] + el2n([confident], data).values[0]) / 2
        assert el2n([flat, confident], data).values[0] == pytest.approx(expected)

    def test_el2n_needs_a_proxy(self) -> None:
        """An empty ensemble is a parameter error."""
        with pytest.raises(ParameterError):
            el2n([], ObservedData(np.zeros((1, 1)), np.array([0]), 2))

    def test_forgetting_hand_count(self) -> None:
        """Count true-to-false transitions."""
        traj = np.array([[1, 1, 0, 1, 0], [1, 1, 1, 1, 1], [0, 0, 0, 0, 0]], dtype=bool)
        np.testing.assert_array_equal(forgetting_events(traj).values, [2, 0, 0])

    def test_forgetting_sums_over_ensemble(self) -> None:
        """Ensemble trajectories add up."""
        one = np.array([[1, 0, 1, 0]], dtype=bool)
        np.testing.assert_array_equal(forgetting_events(np.stack([one, one])).values, [4])

    def test_forgetting_needs_two_epochs(self) -> None:
        """One epoch has no transitions."""
        with pytest.raises(ParameterError, match="2 epochs"):
            forgetting_events(np.ones((3, 1), dtype=bool))

    def test_aum_means(self) -> None:
        """AUM is the mean margin."""
        np.testing.assert_allclose(aum(np.array([[1.0, 3.0, 2.0, 2.0], [-1.0, 0.0, 1.0, 2.0]])).values, [2.0, 0.5])

    def test_hybrid_endpoints_and_midpoint(self) -> None:
        """beta interpolates between the two scores."""
        grad = ScoreVector(np.array([2.0]), ScoreKind.GRAD_NORM)
        rank = ScoreVector(np.array([0.1]), ScoreKind.RANK_VARIANCE)
        assert hybrid(grad, rank, 0.5).values[0] == pytest.approx(1.05)
        assert hybrid(grad, rank, 0.0).values[0] == pytest.approx(0.1)
        assert hybrid(grad, rank, 1.0).values[0] == pytest.approx(2.0)
        assert hybrid(grad, rank, 0.5).label == "hybrid(0.5)"

    def test_hybrid_beta_range(self) -> None:
        """beta outside [0, 1] is refused."""
        grad = ScoreVector(np.array([2.0]), ScoreKind.GRAD_NORM)
        rank = ScoreVector(np.array([0.1]), ScoreKind.RANK_VARIANCE)
        with pytest.raises(ParameterError, match="beta"):
            hybrid(grad, rank, 1.5)


class TestScoreFiles:
    """Tests for score and rank CSV files."""

    def test_score_file_keeps_parameter(self, tmp_path: Path) -> None:
        """The kind column carries the parameter, e.g. hybrid(0.5)."""
        scores = ScoreVector(np.array([0.1, 0.2]), ScoreKind.HYBRID, 0.5)
        write_scores(scores, tmp_path / "scores.csv")
        assert (tmp_path / "scores.csv").read_text().splitlines()[0] == "index,kind,value"
        loaded = read_scores(tmp_path / "scores.csv")
        assert loaded.kind is ScoreKind.HYBRID
        assert loaded.parameter == 0.5
        np.testing.assert_array_equal(loaded.values, scores.values)

    def test_score_file_bad_header(self, tmp_path: Path) -> None:
        """Foreign CSVs are refused."""
        (tmp_path / "scores.csv").write_text("i,score\n0,1.0\n")
        with pytest.raises(IngestionError, match="columns"):
            read_scores(tmp_path / "scores.csv")

    def test_rank_matrix_file(self, tmp_path: Path) -> None:
        """Rank CSVs use proxy ids as header."""
        rm = _rm([[0.5, 1.0], [1.0, 0.5]])
        write_rank_matrix(rm, tmp_path / "ranks.csv")
        loaded = read_rank_matrix(tmp_path / "ranks.csv")
        assert loaded.proxy_ids == ("p0", "p1")
        np.testing.assert_array_equal(loaded.ranks, rm.ranks)
