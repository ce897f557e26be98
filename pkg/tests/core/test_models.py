# Copyright (c) 2025 DR-IS contributors
# SPDX-License-Identifier: MIT

"""Tests for the dris data model invariants."""

from __future__ import annotations

import numpy as np
import pytest

from dris.core.errors import ParameterError
from dris.core.models import (
    LabeledDataset,
    Method,
    ModelKind,
    ModelSpec,
    PlanMode,
    RankMatrix,
    SamplingPlan,
    ScoreKind,
    ScoreVector,
    SyntheticSpec,
    TrainConfig,
)


class TestLabeledDataset:
    """Tests for LabeledDataset."""

    def test_clean_has_empty_mask(self, blobs: LabeledDataset) -> None:
        """A clean dataset has no corrupted rows."""
        assert blobs.n == 80
        assert blobs.d == 3
        assert blobs.epsilon == 0.0
        assert not blobs.corrupt_mask.any()

    def test_mask_must_match_labels(self) -> None:
        """corrupt_mask is exactly labels != clean_labels."""
        features = np.zeros((3, 2))
        with pytest.raises(ParameterError, match="corrupt_mask"):
            LabeledDataset(features, [0, 1, 1], [0, 1, 0], [False, False, False], 2)

    def test_label_range(self) -> None:
        """Labels outside [0, C) are refused."""
        with pytest.raises(ParameterError, match="labels must lie"):
            LabeledDataset.clean(np.zeros((2, 2)), [0, 2], num_classes=2)

    def test_with_labels_recomputes_mask(self, blobs: LabeledDataset) -> None:
        """Relabeling keeps ground truth and updates the mask."""
        labels = blobs.labels.copy()
        labels[:5] = 1 - labels[:5]
        noisy = blobs.with_labels(labels)
        assert noisy.corrupt_mask[:5].all()
        assert noisy.corrupt_mask.sum() == 5
        np.testing.assert_array_equal(noisy.clean_labels, blobs.clean_labels)
        assert noisy.epsilon == pytest.approx(5 / 80)

    def test_views(self, blobs: LabeledDataset) -> None:
        """observed carries the noisy labels, clean_view the true ones."""
        labels = blobs.labels.copy()
        labels[0] = 1 - labels[0]
        noisy = blobs.with_labels(labels)
        assert noisy.observed.labels[0] != noisy.clean_view.labels[0]
        assert noisy.observed.n == 80

    def test_subset(self, blobs: LabeledDataset) -> None:
        """subset keeps rows in the order given."""
        part = blobs.subset(np.array([3, 1]))
        assert part.n == 2
        np.testing.assert_array_equal(part.features[0], blobs.features[3])


class TestSpecs:
    """Tests for model, training and synthetic specs."""

    def test_mlp_needs_hidden_width(self) -> None:
        """The one-hidden-layer model needs a positive width."""
        with pytest.raises(ParameterError, match="hidden_width"):
            ModelSpec(ModelKind.MLP, 4, 2)

    def test_num_params(self) -> None:
        """Flat parameter counts match the architecture."""
        assert ModelSpec(ModelKind.LINEAR_SOFTMAX, 4, 3).num_params == 15
        assert ModelSpec(ModelKind.MLP, 4, 3, hidden_width=5).num_params == 4 * 5 + 5 + 5 * 3 + 3

    def test_kind_from_string(self) -> None:
        """Kinds may be given by their wire names."""
        assert ModelSpec("linear-squared-hinge", 2, 2).kind is ModelKind.LINEAR_SQUARED_HINGE

    @pytest.mark.parametrize(
        "kwargs", [{"epochs": 0}, {"batch_size": 0}, {"lr": 0.0}, {"momentum": 1.0}, {"seed": -1}]
    )
    def test_train_config_ranges(self, kwargs: dict) -> None:
        """Out-of-range hyperparameters are ParameterErrors."""
        with pytest.raises(ParameterError):
            TrainConfig(**kwargs)

    @pytest.mark.parametrize("kwargs", [{"n": 1}, {"rare_ratio": 0.0}, {"var_rare": -1.0}])
    def test_synthetic_spec_ranges(self, kwargs: dict) -> None:
        """Degenerate mixtures are refused."""
        with pytest.raises(ParameterError):
            SyntheticSpec(**kwargs)


class TestScoresAndPlans:
    """Tests for RankMatrix, ScoreVector and SamplingPlan."""

    def test_rank_matrix_range(self) -> None:
        """Ranks lie in (0, 1]."""
        with pytest.raises(ParameterError, match=r"\(0, 1\]"):
            RankMatrix(np.array([[0.0, 1.0]]), ("a", "b"))

    def test_rank_matrix_ids(self) -> None:
        """One id per proxy column."""
        with pytest.raises(ParameterError, match="proxy id"):
            RankMatrix(np.array([[0.5, 1.0]]), ("a",))

    def test_rank_variance_bounded(self) -> None:
        """Rank variance never exceeds 1/4."""
        with pytest.raises(ParameterError, match=r"\[0, 0.25\]"):
            ScoreVector(np.array([0.3]), ScoreKind.RANK_VARIANCE)

    def test_score_must_be_finite(self) -> None:
        """NaN scores are refused."""
        with pytest.raises(ParameterError, match="finite"):
            ScoreVector(np.array([np.nan]), ScoreKind.EL2N)

    def test_label(self) -> None:
        """Parameterized scores show their parameter."""
        assert ScoreVector(np.zeros(2), ScoreKind.HYBRID, 0.5).label == "hybrid(0.5)"
        assert ScoreVector(np.zeros(2), ScoreKind.EL2N).label == "el2n"

    def test_static_plan_sorted_unique(self) -> None:
        """kept_indices are strictly increasing."""
        with pytest.raises(ParameterError, match="sorted"):
            SamplingPlan(PlanMode.STATIC, 5, kept_indices=np.array([2, 1]))
        assert SamplingPlan(PlanMode.STATIC, 5, kept_indices=np.array([1, 4])).size == 2

    def test_online_plan_probs(self) -> None:
        """Online probabilities are positive and sum to one."""
        with pytest.raises(ParameterError, match="sum to 1"):
            SamplingPlan(PlanMode.ONLINE, 2, probs=np.array([0.2, 0.2]), weights=np.ones(2))
        with pytest.raises(ParameterError, match="strictly positive"):
            SamplingPlan(PlanMode.ONLINE, 2, probs=np.array([0.0, 1.0]), weights=np.ones(2))
        plan = SamplingPlan(PlanMode.ONLINE, 2, probs=np.array([0.25, 0.75]), weights=np.ones(2))
        assert plan.size == 2


class TestMethod:
    """Tests for Method classification."""

    def test_static_and_online_partition(self) -> None:
        """Every method other than uniform SGD is either static or online."""
        for method in Method:
            if method is Method.UNIFORM_SGD:
                assert not method.is_static
                assert not method.is_online
            else:
                assert method.is_static != method.is_online

    def test_needs_proxies(self) -> None:
        """Only random subsets and uniform SGD skip the proxies."""
        assert not Method.RANDOM.needs_proxies
        assert not Method.UNIFORM_SGD.needs_proxies
        assert Method.AUM.needs_proxies
