"""Synthetic crowd tests."""
from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from src.domain.crowdsim import (
    Assignment,
    CrowdDataset,
    assign_annotators,
    build_pool,
    corrupt,
    generate_crowd,
    instance_flip_distribution,
    make_blobs,
    sample_flip_rates,
)
from src.domain.exceptions import ConfigError, DataError
from src.domain.tensornet import MlpNetwork, OptimizerSpec, predict, rng_stream, train_softmax_classifier
from src.domain.value_objects import Activation, FlipRateScope, Split


@pytest.mark.unit
class TestBlobs:
    """Clean dataset tests."""

    def test_balanced_and_split(self) -> None:
        """Classes are balanced and splits follow 80/10/10."""
        clean = make_blobs(400, 5, 4, 3.0, seed=1)
        assert np.bincount(clean.true_labels).tolist() == [100, 100, 100, 100]
        assert len(clean.indices(Split.TRAIN)) == 320
        assert len(clean.indices(Split.VAL)) == 40
        assert len(clean.indices(Split.TEST)) == 40

    def test_centers_separated(self) -> None:
        """Class means sit roughly class_sep apart at least."""
        clean = make_blobs(4000, 3, 3, 6.0, seed=2)
        means = np.stack([clean.features[clean.true_labels == c].mean(axis=0) for c in range(3)])
        gaps = [np.linalg.norm(means[a] - means[b]) for a in range(3) for b in range(a + 1, 3)]
        assert min(gaps) > 5.5

    def test_seed_determinism(self) -> None:
        """Same seed, same data."""
        first, second = make_blobs(50, 3, 2, 2.0, seed=9), make_blobs(50, 3, 2, 2.0, seed=9)
        np.testing.assert_array_equal(first.features, second.features)
        assert first.splits == second.splits

    def test_invalid_parameters(self) -> None:
        """Degenerate sizes are configuration errors."""
        with pytest.raises(ConfigError):
            make_blobs(10, 3, 1, 2.0, seed=0)
        with pytest.raises(ConfigError):
            make_blobs(2, 3, 3, 2.0, seed=0)
        with pytest.raises(ConfigError):
            make_blobs(10, 3, 2, 0.0, seed=0)

    def test_one_instance_per_class(self) -> None:
        """n = C is the smallest valid dataset."""
        clean = make_blobs(10, 3, 10, 2.0, seed=4)
        assert np.bincount(clean.true_labels, minlength=10).tolist() == [1] * 10
        assert clean.size == 10

    def test_wide_separation_is_linearly_separable(self) -> None:
        """Two blobs ten units apart are solved by a linear softmax model."""
        clean = make_blobs(200, 2, 2, 10.0, seed=6)
        train, test = clean.indices(Split.TRAIN), clean.indices(Split.TEST)
        net = MlpNetwork.initialize([2, 2], rng_stream(6, "linear"), final_activation=Activation.SOFTMAX_ROWS)
        net, _ = train_softmax_classifier(
            net, clean.features[train], clean.true_labels[train], 20,
            OptimizerSpec(learning_rate=0.05, batch_size=16), rng_stream(6, "linear-batches"),
        )
        predicted = np.argmax(predict(net, clean.features[test]), axis=1)
        assert np.mean(predicted == clean.true_labels[test]) >= 0.99


@pytest.mark.unit
class TestFlipDistributions:
    """Instance-dependent flip distribution tests."""

    @given(
        st.integers(min_value=2, max_value=6),
        st.floats(min_value=0.0, max_value=1.0),
        st.integers(min_value=0, max_value=2**16),
    )
    @settings(max_examples=60, deadline=None)
    def test_diagonal_and_normalization(self, num_classes: int, q: float, seed: int) -> None:
        """p_y = 1 - q exactly and the entries sum to one."""
        rng = np.random.default_rng(seed)
        x = rng.standard_normal(4)
        projections = rng.standard_normal((num_classes, 4))
        y = int(rng.integers(num_classes))
        p = instance_flip_distribution(x, y, projections, q)
        assert p[y] == 1.0 - q
        assert np.all(p >= 0)
        assert abs(p.sum() - 1.0) <= 1e-12

    def test_rate_out_of_range(self) -> None:
        """q must be a probability."""
        with pytest.raises(ConfigError):
            instance_flip_distribution(np.zeros(2), 0, np.zeros((2, 2)), 1.5)

    def test_truncated_rates_in_bounds(self) -> None:
        """Rejection sampling stays inside [0, rho_max]."""
        rates = sample_flip_rates(500, 0.5, 0.55, seed=3)
        assert np.all((rates >= 0) & (rates <= 0.55))

    def test_zero_rate_pool(self) -> None:
        """rho_max = 0 gives noiseless annotators."""
        np.testing.assert_array_equal(sample_flip_rates(4, 0.0, 0.0, seed=0), np.zeros(4))

    def test_rho_above_max(self) -> None:
        """rho beyond rho_max is rejected."""
        with pytest.raises(ConfigError):
            sample_flip_rates(3, 0.7, 0.5, seed=0)

    def test_interior_rate_mean(self) -> None:
        """Truncation to [0, 0.6] around 0.3 leaves the mean at 0.3."""
        rates = sample_flip_rates(100_000, 0.3, 0.6, seed=11)
        assert abs(rates.mean() - 0.3) <= 0.01

    def test_zero_rate_concentrates_near_zero(self) -> None:
        """rho = 0 gives a half-normal whose median is about 0.067."""
        rates = sample_flip_rates(100_000, 0.0, 0.6, seed=12)
        assert np.all((rates >= 0) & (rates <= 0.6))
        assert np.median(rates) < 0.07

    def test_worked_example(self) -> None:
        """Scores (., 1, 0) with q = 0.4 split the off-diagonal mass e : 1."""
        x = np.array([1.0, 0.0])
        projections = np.array([[3.0, 3.0], [1.0, 0.0], [0.0, 1.0]])
        p = instance_flip_distribution(x, 0, projections, 0.4)
        e = np.e
        np.testing.assert_allclose(p, [0.6, 0.4 * e / (e + 1), 0.4 / (e + 1)], atol=1e-12)
        np.testing.assert_allclose(p, [0.6, 0.2927, 0.1073], atol=1e-4)

    def test_zero_rate_is_one_hot(self) -> None:
        """q = 0 keeps the true class."""
        p = instance_flip_distribution(np.array([0.3, -0.2]), 1, np.ones((3, 2)), 0.0)
        assert p.tolist() == [0.0, 1.0, 0.0]


@pytest.mark.unit
class TestAnnotatorPool:
    """Annotator pool tests."""

    def test_groups_share_rates_and_projections(self) -> None:
        """Group scope gives every group member the same q."""
        pool = build_pool(6, 3, 4, 3, 0.3, 0.5, seed=1)
        assert pool.group_of.tolist() == [0, 0, 1, 1, 2, 2]
        assert pool.flip_rates[0] == pool.flip_rates[1]
        assert pool.projections.shape == (3, 3, 4)

    def test_annotator_scope(self) -> None:
        """Annotator scope draws one rate each."""
        pool = build_pool(6, 3, 4, 3, 0.3, 0.5, seed=1, scope=FlipRateScope.ANNOTATOR)
        assert len(set(pool.flip_rates.tolist())) == 6

    def test_indivisible_groups(self) -> None:
        """R must be a multiple of G."""
        with pytest.raises(ConfigError):
            build_pool(7, 3, 4, 3, 0.3, 0.5, seed=1)

    def test_transition_rows_are_flip_distributions(self) -> None:
        """Row c of the ground truth is the flip distribution of class c."""
        pool = build_pool(4, 2, 3, 3, 0.3, 0.5, seed=5)
        x = np.array([0.5, -1.0, 2.0])
        matrix = pool.transition_matrix(x, 3)
        projections = pool.projections[pool.group_of[3]]
        for c in range(3):
            np.testing.assert_allclose(
                matrix[c], instance_flip_distribution(x, c, projections, pool.flip_rates[3]), atol=1e-12
            )
        np.testing.assert_allclose(matrix.sum(axis=1), 1.0, atol=1e-12)


@pytest.mark.unit
class TestAssignment:
    """Sparse assignment tests."""

    def test_everyone_gets_one(self) -> None:
        """r = 1 gives exactly one annotator per instance."""
        assignment = assign_annotators(100, 10, 1.0, seed=0)
        assert [len(w) for w in assignment.sets()] == [1] * 100

    def test_extra_quota(self) -> None:
        """Each annotator adds floor((r - 1) n / R) instances before deduplication."""
        assignment = assign_annotators(100, 10, 3.0, seed=0)
        assert assignment.instance_ids.shape[0] <= 100 + 10 * 20
        assert all(len(w) >= 1 for w in assignment.sets())
        keys = assignment.instance_ids * 10 + assignment.annotator_ids
        assert np.unique(keys).shape[0] == keys.shape[0]

    def test_mean_above_pool(self) -> None:
        """r cannot exceed R."""
        with pytest.raises(ConfigError):
            assign_annotators(10, 3, 4.0, seed=0)

    @pytest.mark.slow
    def test_large_pool_mean_load(self) -> None:
        """R = 300, r = 2 over 54000 instances averages two labels per instance."""
        assignment = assign_annotators(54_000, 300, 2.0, seed=13)
        sizes = np.bincount(assignment.instance_ids, minlength=54_000)
        assert sizes.min() >= 1
        assert abs(sizes.mean() - 2.0) <= 0.05


@pytest.mark.unit
class TestCorruption:
    """Label corruption tests."""

    def test_empirical_flip_rates(self) -> None:
        """With many labels per annotator, flip frequency tracks q_j."""
        crowd = generate_crowd(
            n=30000, dim=4, num_classes=3, class_sep=3.0, num_annotators=2, num_groups=2,
            rho=0.3, rho_max=0.6, mean_annotations=2.0, seed=11,
        )
        counts = crowd.annotator_counts()
        rates = crowd.empirical_flip_rates()
        assert crowd.pool is not None
        assert counts.min() >= 10_000
        for j in range(2):
            assert abs(rates[j] - crowd.pool.flip_rates[j]) <= 0.02

    def test_test_split_never_annotated(self, tiny_crowd: CrowdDataset) -> None:
        """Only train and validation instances carry labels."""
        assert not np.any(tiny_crowd.mask(Split.TEST))
        assert tiny_crowd.mean_annotations() >= 1.0

    def test_corrupt_rejects_test_instances(self) -> None:
        """Assigning a test instance is a data error."""
        clean = make_blobs(20, 3, 2, 2.0, seed=0)
        pool = build_pool(2, 1, 3, 2, 0.2, 0.4, seed=0)
        test_id = int(clean.indices(Split.TEST)[0])
        assignment = Assignment(np.array([test_id]), np.array([0]), clean.size)
        with pytest.raises(DataError):
            corrupt(clean, pool, assignment, seed=0)

    def test_noiseless_pool_copies_truth(self) -> None:
        """q = 0 reproduces the true labels."""
        crowd = generate_crowd(
            n=100, dim=3, num_classes=3, class_sep=2.0, num_annotators=4, num_groups=2,
            rho=0.0, rho_max=0.0, mean_annotations=2.0, seed=0,
        )
        np.testing.assert_array_equal(crowd.labels, crowd.base.true_labels[crowd.instance_ids])

    def test_generation_is_deterministic(self) -> None:
        """Same arguments, same crowd."""
        kwargs = dict(
            n=80, dim=3, num_classes=3, class_sep=2.0, num_annotators=4, num_groups=2,
            rho=0.3, rho_max=0.5, mean_annotations=2.0, seed=4,
        )
        first, second = generate_crowd(**kwargs), generate_crowd(**kwargs)
        np.testing.assert_array_equal(first.labels, second.labels)
        np.testing.assert_array_equal(first.annotator_ids, second.annotator_ids)
