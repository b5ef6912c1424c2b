"""Annotator graph and GCN transfer tests."""
from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from src.domain.exceptions import ConfigError, ContractError, NumericalError, ShapeError
from src.domain.graphtransfer import (
    GcnMapper,
    GcnTransition,
    SimilarityGraph,
    assemble_heads,
    build_graph,
    contraction_check,
    gcn_forward,
    gcn_loss,
    gcn_objective,
    graph_recovery,
    graph_svd_denoise,
    group_equality_check,
    knn_adjacency,
    normalize,
    orthogonality_check,
    similarity,
    train_gcn,
    uniform_degree,
)
from src.domain.tensornet import OptimizerSpec, finite_diff_check
from src.domain.transition import TransitionNetwork, finetune_all, train_global
from src.domain.value_objects import Activation, SimilarityNorm
from tests.factories import (
    circulant_adjacency,
    grouped_distilled,
    planted_blocks,
    random_distilled,
    two_block_adjacency,
)


def graph_from_adjacency(A: np.ndarray, k: int, rank: int) -> SimilarityGraph:
    return SimilarityGraph(S=A.copy(), A=A, A_star=A, A_hat=normalize(A), k=k, rank=rank)


@pytest.mark.unit
class TestSimilarity:
    """Cosine similarity tests."""

    def test_symmetric_with_unit_diagonal(self, rng: np.random.Generator) -> None:
        """S is symmetric and S_ii = 1."""
        S = similarity(rng.standard_normal((5, 7)))
        np.testing.assert_array_equal(S, S.T)
        np.testing.assert_allclose(np.diag(S), 1.0)

    def test_l1_norm_variant(self) -> None:
        """L1 denominators shrink the scores."""
        vectors = np.array([[1.0, 1.0], [1.0, 0.0]])
        assert similarity(vectors, SimilarityNorm.L1)[0, 1] == pytest.approx(0.5)
        assert similarity(vectors)[0, 1] == pytest.approx(1 / np.sqrt(2))

    def test_zero_head(self) -> None:
        """A zero head cannot be normalized."""
        with pytest.raises(NumericalError):
            similarity(np.array([[1.0, 0.0], [0.0, 0.0]]))


@pytest.mark.unit
class TestKnn:
    """KNN adjacency tests."""

    def test_known_neighbors(self) -> None:
        """Top-k by similarity with the node itself first."""
        S = np.array([[1.0, 0.9, 0.1], [0.9, 1.0, 0.5], [0.1, 0.5, 1.0]])
        np.testing.assert_array_equal(
            knn_adjacency(S, 2), [[1, 1, 0], [1, 1, 0], [0, 1, 1]]
        )

    def test_ties_go_to_lower_index(self) -> None:
        """Equal similarities prefer the smaller annotator id."""
        S = np.array([[1.0, 0.5, 0.5], [0.5, 1.0, 0.5], [0.5, 0.5, 1.0]])
        np.testing.assert_array_equal(
            knn_adjacency(S, 2), [[1, 1, 0], [1, 1, 0], [1, 0, 1]]
        )

    def test_k_one_is_identity(self, rng: np.random.Generator) -> None:
        """k = 1 links every node only to itself."""
        S = similarity(rng.standard_normal((6, 3)))
        np.testing.assert_array_equal(knn_adjacency(S, 1), np.eye(6))

    def test_k_out_of_range(self) -> None:
        """k must lie in [1, R]."""
        with pytest.raises(ConfigError):
            knn_adjacency(np.eye(3), 4)
        with pytest.raises(ConfigError):
            knn_adjacency(np.eye(3), 0)

    @given(st.integers(min_value=2, max_value=8), st.data())
    @settings(max_examples=40, deadline=None)
    def test_rows_have_k_entries(self, size: int, data: st.DataObject) -> None:
        """Every row has exactly k ones including the diagonal."""
        k = data.draw(st.integers(min_value=1, max_value=size))
        seed = data.draw(st.integers(min_value=0, max_value=2**16))
        S = similarity(np.random.default_rng(seed).standard_normal((size, 4)) + 0.1)
        A = knn_adjacency(S, k)
        assert A.sum(axis=1).tolist() == [float(k)] * size
        assert np.all(np.diag(A) == 1.0)


@pytest.mark.unit
class TestDenoiseAndNormalize:
    """Graph-SVD and normalization tests."""

    def test_block_graph_survives(self) -> None:
        """A clean two-block graph is its own rank-2 reconstruction."""
        A = two_block_adjacency()
        np.testing.assert_array_equal(graph_svd_denoise(A, 2), A)

    def test_self_loops_forced(self) -> None:
        """The diagonal is always one."""
        denoised = graph_svd_denoise(np.eye(5), 1)
        assert np.all(np.diag(denoised) == 1.0)

    def test_rank_range(self) -> None:
        """Rank must lie in [1, R]."""
        with pytest.raises(ConfigError):
            graph_svd_denoise(np.eye(3), 4)

    def test_rows_sum_to_one(self) -> None:
        """Normalized rows are distributions."""
        A_hat = normalize(circulant_adjacency(5, 3))
        np.testing.assert_allclose(A_hat.sum(axis=1), 1.0)
        assert uniform_degree(A_hat) == 3

    def test_planted_blocks_with_flipped_entries(self) -> None:
        """Rank-3 denoising recovers a 3-block graph after 5% of entries flip."""
        noisy, groups = planted_blocks(30, 3, 0.05, seed=21)
        truth = (groups[:, None] == groups[None, :]).astype(np.float64)
        assert not np.array_equal(noisy, truth)
        denoised = graph_svd_denoise(noisy, 3)
        true_edges = truth.astype(bool)
        assert (denoised.astype(bool) & true_edges).sum() / true_edges.sum() >= 0.9
        assert graph_recovery(denoised, groups) >= 0.9

    def test_two_block_normalization(self) -> None:
        """Four annotators in two pairs average over their pair."""
        expected = np.array(
            [[0.5, 0.5, 0.0, 0.0], [0.5, 0.5, 0.0, 0.0], [0.0, 0.0, 0.5, 0.5], [0.0, 0.0, 0.5, 0.5]]
        )
        np.testing.assert_array_equal(normalize(two_block_adjacency()), expected)

    def test_isolated_node(self) -> None:
        """A zero-degree row cannot be normalized."""
        with pytest.raises(ContractError):
            normalize(np.array([[1.0, 0.0], [0.0, 0.0]]))


@pytest.mark.unit
class TestBuildGraph:
    """End-to-end graph construction tests."""

    def test_groups_recovered(self, rng: np.random.Generator) -> None:
        """Heads clustered by group yield a same-group graph."""
        prototypes = rng.standard_normal((2, 12))
        groups = np.repeat(np.arange(2), 3)
        vectors = prototypes[groups] + 0.01 * rng.standard_normal((6, 12))
        graph = build_graph(vectors, k=3, rank=2)
        np.testing.assert_array_equal(graph.A_star, np.kron(np.eye(2), np.ones((3, 3))))
        assert graph_recovery(graph.A_star, groups) == 1.0
        np.testing.assert_allclose(graph.A_hat.sum(axis=1), 1.0)

    def test_recovery_fraction(self) -> None:
        """Cross-group edges lower the recovery score."""
        A_star = two_block_adjacency()
        A_star[0, 2] = 1.0
        assert graph_recovery(A_star, np.array([0, 0, 1, 1])) == pytest.approx(4 / 5)

    def test_recovery_without_edges(self) -> None:
        """An identity graph counts as fully recovered."""
        assert graph_recovery(np.eye(3), np.array([0, 1, 2])) == 1.0


@pytest.mark.unit
class TestGcnMapper:
    """GCN forward and validation tests."""

    def test_chain_validated(self) -> None:
        """Adjacent weights must agree on widths."""
        with pytest.raises(ShapeError):
            GcnMapper(weights=(np.zeros((4, 3)), np.zeros((2, 5))))

    def test_final_activation_restricted(self) -> None:
        """Only identity or ReLU on the last layer."""
        with pytest.raises(ConfigError):
            GcnMapper(weights=(np.zeros((4, 3)),), final_activation=Activation.SOFTMAX_ROWS)

    def test_forward_shapes(self) -> None:
        """One feature matrix per layer, H^0 the identity."""
        mapper = GcnMapper.initialize(4, (5,), 6, seed=0)
        features = gcn_forward(mapper, normalize(two_block_adjacency()))
        assert [h.shape for h in features] == [(4, 4), (4, 5), (4, 6)]
        np.testing.assert_array_equal(features[0], np.eye(4))

    def test_assemble_width_mismatch(self) -> None:
        """Final width must equal h*C*C."""
        with pytest.raises(ConfigError):
            assemble_heads(np.zeros((4, 10)), latent_dim=2, num_classes=2)

    def test_two_block_groups_stay_equal(self) -> None:
        """Within-group node features are bitwise equal at every layer for random weights."""
        A_hat = normalize(two_block_adjacency())
        groups = np.array([0, 0, 1, 1])
        for draw in range(100):
            rng = np.random.default_rng(draw)
            mapper = GcnMapper(weights=(rng.standard_normal((4, 5)), rng.standard_normal((5, 6))))
            assert group_equality_check(mapper, A_hat, groups)
            for layer in gcn_forward(mapper, A_hat)[1:]:
                assert np.array_equal(layer[0], layer[1])
                assert np.array_equal(layer[2], layer[3])

    def test_mixed_graph_breaks_equality(self) -> None:
        """Without the block structure the group rows differ."""
        A_hat = normalize(circulant_adjacency(4, 2))
        mapper = GcnMapper(weights=(np.random.default_rng(0).standard_normal((4, 3)),))
        assert not group_equality_check(mapper, A_hat, np.array([0, 0, 1, 1]))


@pytest.mark.unit
class TestSmoothingChecks:
    """Contraction and orthogonality checks."""

    def test_contraction_on_random_uniform_graphs(self) -> None:
        """No pair violates the bound on 100 random fixtures."""
        for draw in range(100):
            rng = np.random.default_rng(1000 + draw)
            size = int(rng.integers(3, 8))
            k = int(rng.integers(1, size + 1))
            A_hat = normalize(circulant_adjacency(size, k))
            H = rng.standard_normal((size, 4))
            W = rng.standard_normal((4, 5))
            pairs = [(i, j) for i in range(size) for j in range(i + 1, size)]
            report = contraction_check(W, A_hat, H, pairs)
            assert not report.skipped
            assert report.violations == []
            assert len(report.bounds) == len(pairs)

    def test_contraction_skips_irregular_graph(self) -> None:
        """Non-uniform degrees skip the check with a reason."""
        A = np.array([[1.0, 1.0, 0.0], [0.0, 1.0, 0.0], [0.0, 1.0, 1.0]])
        report = contraction_check(np.eye(2), normalize(A), np.ones((3, 2)), [(0, 1)])
        assert report.skipped
        assert report.bounds == ()

    def test_orthogonality_when_premises_hold(self) -> None:
        """Disjoint inputs and images give orthogonal outputs."""
        report = orthogonality_check(np.eye(4), np.eye(4), np.eye(4), [(0, 1), (2, 3)])
        assert len(report.checked) == 2
        assert report.passed

    def test_orthogonality_premise_not_met(self) -> None:
        """Overlapping supports are reported, not checked."""
        A_hat = normalize(two_block_adjacency())
        report = orthogonality_check(np.eye(4), A_hat, np.eye(4), [(0, 1)])
        assert report.checked == []
        assert report.passed


@pytest.mark.unit
class TestGcnTransition:
    """Inter-dependent heads as a transition source."""

    def test_l3_gradients(self, rng: np.random.Generator) -> None:
        """L3 gradients w.r.t. every W^l pass the oracle."""
        A_hat = normalize(circulant_adjacency(3, 2))
        mapper = GcnMapper(weights=(rng.standard_normal((3, 4)) * 0.5, rng.standard_normal((4, 8)) * 0.5))
        source = GcnTransition(mapper, A_hat, latent_dim=2, num_classes=2)
        latent = np.abs(rng.standard_normal((6, 2)))
        annotators = np.array([0, 1, 2, 0, 1, 2])
        y_star = rng.integers(0, 2, size=6)
        labels = rng.integers(0, 2, size=6)

        def loss_fn(params: list[np.ndarray]) -> tuple[float, list[np.ndarray]]:
            return gcn_loss(source.with_parameters(params), latent, annotators, y_star, labels)

        report = finite_diff_check(loss_fn, source.parameters())
        assert report.passed, report

    def test_row_stochastic_at_scale(self, rng: np.random.Generator) -> None:
        """Ten thousand (x, j) pairs give row-stochastic matrices."""
        A_hat = normalize(circulant_adjacency(5, 3))
        mapper = GcnMapper.initialize(5, (8,), 3 * 9, seed=1)
        source = GcnTransition(mapper, A_hat, latent_dim=3, num_classes=3)
        matrices = source.matrices(
            np.abs(rng.standard_normal((10_000, 3))) * 4, rng.integers(0, 5, size=10_000)
        )
        assert np.all(matrices >= 0)
        assert np.max(np.abs(matrices.sum(axis=2) - 1.0)) <= 1e-9

    def test_training_lowers_objective(self, rng: np.random.Generator) -> None:
        """GCN training fits the distilled pairs better than its initialization."""
        distilled = random_distilled(3, count=60)
        global_net = TransitionNetwork.initialize(3, 3, (5,), 4, seed=2)
        graph = build_graph(rng.standard_normal((4, 10)), k=2, rank=2)
        mapper = GcnMapper.initialize(4, (8,), 4 * 9, seed=2)
        start = gcn_objective(mapper, graph, distilled, global_net)
        trained, history = train_gcn(
            mapper, graph, distilled, global_net, 15, OptimizerSpec(learning_rate=0.05, batch_size=16), seed=2
        )
        assert len(history.losses) == 15
        assert gcn_objective(trained, graph, distilled, global_net) < start

    def test_width_mismatch_fails_before_training(self, rng: np.random.Generator) -> None:
        """A GCN whose output is not h*C*C wide is rejected up front."""
        distilled = random_distilled(4, count=10)
        global_net = TransitionNetwork.initialize(3, 3, (5,), 4, seed=0)
        graph = graph_from_adjacency(two_block_adjacency(), k=2, rank=2)
        mapper = GcnMapper.initialize(4, (8,), 10, seed=0)
        with pytest.raises(ConfigError):
            train_gcn(mapper, graph, distilled, global_net, 1, OptimizerSpec(), seed=0)

    def test_training_leaves_backbone_and_graph_alone(self, rng: np.random.Generator) -> None:
        """Only the GCN weights move."""
        distilled = random_distilled(5, count=30)
        global_net = TransitionNetwork.initialize(3, 3, (5,), 4, seed=5)
        graph = build_graph(rng.standard_normal((4, 10)), k=2, rank=2)
        backbone_before = [param.copy() for param in global_net.parameters()]
        graph_before = [graph.S.copy(), graph.A.copy(), graph.A_star.copy(), graph.A_hat.copy()]
        mapper = GcnMapper.initialize(4, (8,), 4 * 9, seed=5)
        trained, _ = train_gcn(
            mapper, graph, distilled, global_net, 3, OptimizerSpec(learning_rate=0.05, batch_size=8), seed=5
        )
        for old, new in zip(backbone_before, global_net.parameters()):
            np.testing.assert_array_equal(old, new)
        for old, new in zip(graph_before, (graph.S, graph.A, graph.A_star, graph.A_hat)):
            np.testing.assert_array_equal(old, new)
        assert any(not np.array_equal(a, b) for a, b in zip(mapper.weights, trained.weights))

    def test_groups_share_heads_after_transfer(self) -> None:
        """Two groups with different flip patterns end closer within than across groups."""
        distilled = grouped_distilled(8, count=240, shifts=(0, 0, 1, 1))
        spec = OptimizerSpec(learning_rate=0.05, batch_size=16)
        global_net, _ = train_global(distilled, 10, spec, seed=8, hidden=(5,), latent_dim=4)
        individual = finetune_all(global_net, distilled, 10, spec, 8, 1)
        graph = build_graph(individual.head_vectors(), k=2, rank=2)
        mapper = GcnMapper.initialize(4, (8,), 4 * 9, seed=8)
        trained, _ = train_gcn(mapper, graph, distilled, global_net, 20, spec, seed=8)
        heads = GcnTransition(trained, graph.A_hat, 4, 3).heads().head_vectors()

        def mean_distance(pairs: list[tuple[int, int]]) -> float:
            return float(np.mean([np.linalg.norm(heads[i] - heads[j]) for i, j in pairs]))

        within = mean_distance([(0, 1), (2, 3)])
        across = mean_distance([(0, 2), (0, 3), (1, 2), (1, 3)])
        assert within < across
