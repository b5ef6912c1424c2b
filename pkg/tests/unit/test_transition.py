"""Transition network tests."""
from __future__ import annotations

import numpy as np
import pytest

from src.domain.distill import DistilledSet
from src.domain.exceptions import ContractError, PipelineError, ShapeError
from src.domain.tensornet import OptimizerSpec, finite_diff_check, glorot_uniform, rng_stream
from src.domain.transition import (
    GlobalHead,
    IndividualHeads,
    TransitionNetwork,
    bayes_row_loss,
    check_row_stochastic,
    finetune_all,
    finetune_individual,
    global_loss,
    global_objective,
    head_loss,
    individual_objective,
    predict_transition,
    train_global,
)
from tests.factories import random_distilled

NUM_CLASSES = 3
DIM = 3


def small_network(seed: int = 0) -> TransitionNetwork:
    return TransitionNetwork.initialize(DIM, NUM_CLASSES, (5,), 4, seed)


@pytest.mark.unit
class TestTransitionNetwork:
    """Global network tests."""

    def test_head_shape_validated(self) -> None:
        """Head width must be C*C over the latent dimension."""
        net = small_network()
        with pytest.raises(ShapeError):
            TransitionNetwork(net.backbone, np.zeros((4, 8)), np.zeros(8), NUM_CLASSES)

    def test_predict_single_and_batch(self, rng: np.random.Generator) -> None:
        """One instance gives C x C, a batch gives b x C x C, rows stochastic."""
        net = small_network()
        single = predict_transition(net, rng.standard_normal(DIM))
        batch = predict_transition(net, rng.standard_normal((5, DIM)))
        assert single.shape == (NUM_CLASSES, NUM_CLASSES)
        assert batch.shape == (5, NUM_CLASSES, NUM_CLASSES)
        check_row_stochastic(batch)

    def test_wrong_dimension(self) -> None:
        """Instance dimension must match the backbone."""
        with pytest.raises(ShapeError):
            predict_transition(small_network(), np.zeros(DIM + 1))

    @pytest.mark.parametrize("net_seed", [2, 5, 11, 17])
    def test_global_loss_gradients(self, net_seed: int) -> None:
        """L1 gradients pass the finite-difference oracle, dead ReLU units included."""
        distilled = random_distilled(1, count=8)
        rows, _, labels = distilled.pairs()
        features, y_star = distilled.features()[rows], distilled.y_stars()[rows]
        net = small_network(seed=net_seed)

        def loss_fn(params: list[np.ndarray]) -> tuple[float, list[np.ndarray]]:
            return global_loss(net.with_parameters(params), features, y_star, labels)

        report = finite_diff_check(loss_fn, net.parameters())
        assert report.passed, report
        assert report.checked > report.skipped

    def test_zero_head_starts_at_log_c(self) -> None:
        """A zero head predicts uniform rows, so the loss is log C."""
        distilled = random_distilled(4, count=20)
        net = small_network(seed=3)
        zero_head = [*net.backbone.parameters(), np.zeros_like(net.head_weight), np.zeros_like(net.head_bias)]
        flat = net.with_parameters(zero_head)
        np.testing.assert_allclose(predict_transition(flat, np.ones(DIM)), np.full((3, 3), 1 / 3))
        assert global_objective(flat, distilled) == pytest.approx(np.log(NUM_CLASSES), abs=1e-12)

    def test_noise_free_labels_concentrate_on_the_diagonal(self) -> None:
        """When every label equals y*, row y* puts at least 0.9 on y*."""
        distilled = random_distilled(6, count=200, keep=1.0)
        net, _ = train_global(
            distilled, 20, OptimizerSpec(learning_rate=0.05, batch_size=16), seed=6,
            hidden=(5,), latent_dim=4,
        )
        matrices = predict_transition(net, distilled.features())
        y_star = distilled.y_stars()
        assert np.mean(matrices[np.arange(y_star.shape[0]), y_star, y_star]) >= 0.9

    def test_training_lowers_objective(self) -> None:
        """Training reduces the pooled objective from its initial value."""
        distilled = random_distilled(3, count=60)
        start = global_objective(small_network(seed=4), distilled)
        net, history = train_global(
            distilled, 15, OptimizerSpec(learning_rate=0.05, batch_size=16), seed=4,
            hidden=(5,), latent_dim=4,
        )
        assert len(history.losses) == 15
        assert global_objective(net, distilled) < start

    def test_empty_distilled_set(self) -> None:
        """Nothing to learn from is a stage failure."""
        empty = DistilledSet.build([], 3, NUM_CLASSES)
        with pytest.raises(PipelineError):
            train_global(empty, 1, OptimizerSpec(), seed=0)


@pytest.mark.unit
class TestBayesRowLoss:
    """Row-selection loss tests."""

    def test_value(self) -> None:
        """-log T[y*, label] averaged."""
        matrices = np.array([[[0.7, 0.3], [0.2, 0.8]], [[0.6, 0.4], [0.5, 0.5]]])
        loss, grad = bayes_row_loss(matrices, np.array([0, 1]), np.array([1, 1]))
        assert loss == pytest.approx(-(np.log(0.3) + np.log(0.5)) / 2)
        assert grad[0, 0, 1] == pytest.approx(-1 / (0.3 * 2))
        assert np.count_nonzero(grad) == 2

    def test_row_check_rejects_negative(self) -> None:
        """Negative entries are a contract violation."""
        with pytest.raises(ContractError):
            check_row_stochastic(np.array([[1.2, -0.2], [0.5, 0.5]]))


@pytest.mark.unit
class TestIndividualHeads:
    """Per-annotator fine-tuning tests."""

    def test_head_loss_gradients(self, rng: np.random.Generator) -> None:
        """L2 gradients pass the finite-difference oracle."""
        latent = np.abs(rng.standard_normal((10, 4)))
        y_star = rng.integers(0, NUM_CLASSES, size=10)
        labels = rng.integers(0, NUM_CLASSES, size=10)
        weight = glorot_uniform(4, NUM_CLASSES**2, rng_stream(0, "head"))
        bias = np.zeros(NUM_CLASSES**2)

        def loss_fn(params: list[np.ndarray]) -> tuple[float, list[np.ndarray]]:
            return head_loss(latent, params[0], params[1], y_star, labels, NUM_CLASSES)

        assert finite_diff_check(loss_fn, [weight, bias]).passed

    def test_fallback_copies_global_head(self) -> None:
        """Annotators under the floor keep the global head."""
        distilled = random_distilled(5, count=20, num_annotators=5)
        net = small_network(seed=6)
        floor = 6
        heads = finetune_all(net, distilled, 3, OptimizerSpec(learning_rate=0.05, batch_size=4), 6, floor)
        for j in range(5):
            short = distilled.m_j(j) < floor
            assert heads.fallback[j] == short
            if short:
                np.testing.assert_array_equal(heads.weights[j], net.head_weight)
            else:
                unchanged = np.array_equal(heads.weights[j], net.head_weight) and np.array_equal(
                    heads.biases[j], net.head_bias
                )
                assert not unchanged

    def test_finetuning_lowers_annotator_objective(self) -> None:
        """Each fine-tuned head fits its own annotator better than the global head."""
        distilled = random_distilled(8, count=80, num_annotators=2)
        net = small_network(seed=8)
        start = IndividualHeads(
            np.stack([net.head_weight] * 2), np.stack([net.head_bias] * 2),
            np.zeros(2, dtype=bool), NUM_CLASSES,
        )
        heads = finetune_all(net, distilled, 10, OptimizerSpec(learning_rate=0.05, batch_size=8), 8, 1)
        for j in range(2):
            assert individual_objective(heads, net, distilled, j) < individual_objective(start, net, distilled, j)

    def test_zero_epochs_copy_the_global_head(self) -> None:
        """Fine-tuning starts from the global head."""
        distilled = random_distilled(9, count=30)
        net = small_network(seed=9)
        fit = finetune_individual(net, distilled, 0, 0, OptimizerSpec(), seed=9, min_examples=1)
        assert not fit.fallback
        np.testing.assert_array_equal(fit.weight, net.head_weight)
        np.testing.assert_array_equal(fit.bias, net.head_bias)

    def test_backbone_is_frozen(self) -> None:
        """Fine-tuning never touches backbone parameters."""
        distilled = random_distilled(10, count=40)
        net = small_network(seed=10)
        before = [param.copy() for param in net.backbone.parameters()]
        finetune_all(net, distilled, 4, OptimizerSpec(learning_rate=0.1, batch_size=4), 10, 1)
        for old, new in zip(before, net.backbone.parameters()):
            np.testing.assert_array_equal(old, new)

    def test_clean_annotator_gains_diagonal_mass(self) -> None:
        """An annotator who always reports y* ends up more diagonal than the global head."""
        distilled = random_distilled(12, count=150, keep=0.3, clean_annotators=(0,))
        spec = OptimizerSpec(learning_rate=0.05, batch_size=8)
        net, _ = train_global(distilled, 10, spec, seed=12, hidden=(5,), latent_dim=4)
        heads = finetune_all(net, distilled, 10, spec, 12, 1)
        rows, annotators, _ = distilled.pairs(0)
        latent = net.latent(distilled.features()[rows])
        y_star = distilled.y_stars()[rows]
        picked = np.arange(rows.shape[0])
        own = heads.matrices(latent, annotators)[picked, y_star, y_star]
        shared = net.head().matrices(latent, annotators)[picked, y_star, y_star]
        assert own.mean() >= shared.mean()

    def test_matrices_follow_annotator(self, rng: np.random.Generator) -> None:
        """Row b uses the head of annotators[b]."""
        weights = np.stack([glorot_uniform(4, 9, rng_stream(j, "h")) for j in range(3)])
        heads = IndividualHeads(weights, np.zeros((3, 9)), np.zeros(3, dtype=bool), NUM_CLASSES)
        latent = np.abs(rng.standard_normal((2, 4)))
        matrices = heads.matrices(latent, np.array([2, 0]))
        expected = GlobalHead(weights[2], np.zeros(9), NUM_CLASSES).matrices(latent[:1], np.array([0]))
        np.testing.assert_allclose(matrices[0], expected[0])


@pytest.mark.unit
class TestSourceBackward:
    """Transition sources pull dLoss/dT back to their parameters."""

    @pytest.mark.parametrize("kind", ["global", "individual"])
    def test_linear_functional_gradients(self, kind: str, rng: np.random.Generator) -> None:
        """Gradient of sum(G * T) matches finite differences."""
        latent = np.abs(rng.standard_normal((6, 4)))
        annotators = np.array([0, 1, 2, 0, 1, 2])
        weights = rng.standard_normal((6, NUM_CLASSES, NUM_CLASSES))
        if kind == "global":
            source = GlobalHead(glorot_uniform(4, 9, rng), rng.standard_normal(9), NUM_CLASSES)
        else:
            source = IndividualHeads(
                rng.standard_normal((3, 4, 9)), rng.standard_normal((3, 9)),
                np.zeros(3, dtype=bool), NUM_CLASSES,
            )

        def loss_fn(params: list[np.ndarray]) -> tuple[float, list[np.ndarray]]:
            current = source.with_parameters(params)
            value = float(np.sum(weights * current.matrices(latent, annotators)))
            return value, current.backward(latent, annotators, weights)

        assert finite_diff_check(loss_fn, source.parameters()).passed

    def test_row_stochastic_at_scale(self, rng: np.random.Generator) -> None:
        """Ten thousand sampled (x, j) pairs all give row-stochastic matrices."""
        net = small_network(seed=11)
        features = rng.standard_normal((10_000, DIM)) * 3
        annotators = rng.integers(0, 4, size=10_000)
        latent = net.latent(features)
        heads = IndividualHeads(
            rng.standard_normal((4, 4, 9)) * 2, rng.standard_normal((4, 9)),
            np.zeros(4, dtype=bool), NUM_CLASSES,
        )
        for source in (net.head(), heads):
            matrices = source.matrices(latent, annotators)
            assert np.all(matrices >= 0)
            assert np.max(np.abs(matrices.sum(axis=2) - 1.0)) <= 1e-9
