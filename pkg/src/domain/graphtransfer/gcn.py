"""GCN mapping from one-hot annotator nodes to inter-dependent head parameters."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
import numpy.typing as npt
import structlog

from src.domain.distill import DistilledSet
from src.domain.exceptions import ConfigError, PipelineError, ShapeError
from src.domain.graphtransfer.similarity import SimilarityGraph
from src.domain.tensornet import (
    OptimizerSpec,
    TrainingHistory,
    ensure_finite,
    glorot_uniform,
    rng_stream,
    run_sgd,
)
from src.domain.tensornet.network import activate, activate_backward
from src.domain.transition import (
    TransitionNetwork,
    _logit_grad,
    bayes_row_loss,
    head_matrices,
)
from src.domain.value_objects import Activation

Array = npt.NDArray[np.float64]
IntArray = npt.NDArray[np.int64]

logger = structlog.get_logger(__name__)


@dataclass(frozen=True)
class GcnMapper:
    """Stacked graph-convolution weights W^0..W^{L-1}."""

    weights: tuple[Array, ...]
    final_activation: Activation = Activation.IDENTITY

    def __post_init__(self) -> None:
        """Validate the dimension chain."""
        if not self.weights:
            raise ShapeError("GCN needs at least one layer")
        for index, (left, right) in enumerate(zip(self.weights, self.weights[1:])):
            if left.shape[1] != right.shape[0]:
                raise ShapeError(f"W^{index} outputs {left.shape[1]}, W^{index + 1} expects {right.shape[0]}")
        if self.final_activation not in (Activation.IDENTITY, Activation.RELU):
            raise ConfigError("GCN final activation must be identity or relu")

    @classmethod
    def initialize(
        cls,
        num_annotators: int,
        hidden: Sequence[int],
        output_dim: int,
        seed: int,
        final_activation: Activation = Activation.IDENTITY,
    ) -> GcnMapper:
        """Glorot-uniform weights from the (seed, "gcn") stream."""
        rng = rng_stream(seed, "gcn")
        dims = [num_annotators, *hidden, output_dim]
        weights = tuple(glorot_uniform(a, b, rng) for a, b in zip(dims, dims[1:]))
        return cls(weights=weights, final_activation=final_activation)

    @property
    def num_layers(self) -> int:
        """L."""
        return len(self.weights)

    @property
    def output_dim(self) -> int:
        """Z^L."""
        return int(self.weights[-1].shape[1])

    def activation(self, layer: int) -> Activation:
        """ReLU on hidden layers, configured activation on the last."""
        return self.final_activation if layer == self.num_layers - 1 else Activation.RELU

    def with_weights(self, weights: Sequence[Array]) -> GcnMapper:
        """Copy with new weights."""
        return replace(self, weights=tuple(weights))


@dataclass
class GcnCache:
    """Aggregated inputs A-hat H^l, pre-activations and node features per layer."""

    features: list[Array] = field(default_factory=list)
    aggregated: list[Array] = field(default_factory=list)
    pre_activations: list[Array] = field(default_factory=list)


def _forward(mapper: GcnMapper, A_hat: Array, H0: Optional[Array]) -> GcnCache:
    count = A_hat.shape[0]
    if A_hat.shape != (count, count):
        raise ShapeError(f"normalized adjacency must be square, got {A_hat.shape}")
    features = np.eye(count) if H0 is None else H0
    if features.shape[0] != count or features.shape[1] != mapper.weights[0].shape[0]:
        raise ShapeError(f"node features {features.shape} vs W^0 {mapper.weights[0].shape}")
    cache = GcnCache(features=[features])
    for layer, weight in enumerate(mapper.weights):
        aggregated = A_hat @ features
        pre = aggregated @ weight
        features = activate(pre, mapper.activation(layer))
        cache.aggregated.append(aggregated)
        cache.pre_activations.append(pre)
        cache.features.append(features)
    return cache


def gcn_forward(mapper: GcnMapper, A_hat: Array, H0: Optional[Array] = None) -> list[Array]:
    """[H^0, ..., H^L] with H^{l+1} = act(A-hat H^l W^l); H^0 defaults to identity."""
    cache = _forward(mapper, A_hat, H0)
    ensure_finite(cache.features[-1], "GCN node features")
    return cache.features


def gcn_backward(mapper: GcnMapper, A_hat: Array, cache: GcnCache, grad_output: Array) -> list[Array]:
    """Gradients w.r.t. every W^l given dLoss/dH^L."""
    grads: list[Array] = [np.empty(0)] * mapper.num_layers
    grad = grad_output
    for layer in range(mapper.num_layers - 1, -1, -1):
        grad = activate_backward(
            cache.pre_activations[layer], cache.features[layer + 1], grad, mapper.activation(layer)
        )
        grads[layer] = cache.aggregated[layer].T @ grad
        grad = A_hat.T @ (grad @ mapper.weights[layer].T)
    return grads


@dataclass(frozen=True)
class InterdependentHeads:
    """theta'_j = final node feature of annotator j reshaped to (h, C*C)."""

    theta: Array
    num_classes: int

    @property
    def num_annotators(self) -> int:
        """R."""
        return int(self.theta.shape[0])

    def head_vectors(self) -> Array:
        """(R, h*C*C)."""
        return self.theta.reshape(self.num_annotators, -1)

    def matrices(self, latent: Array, annotators: IntArray) -> Array:
        """Row softmax of reshape(theta'_j . g(x)); no bias term."""
        return head_matrices(latent, self.theta[annotators], np.zeros(1), self.num_classes)


def assemble_heads(H_L: Array, latent_dim: int, num_classes: int) -> InterdependentHeads:
    """Reshape each node's final features into an (h, C*C) head."""
    expected = latent_dim * num_classes * num_classes
    if H_L.ndim != 2 or H_L.shape[1] != expected:
        raise ConfigError(f"final GCN width {H_L.shape[-1]} must equal h*C*C = {expected}")
    theta = H_L.reshape(H_L.shape[0], latent_dim, num_classes * num_classes).copy()
    return InterdependentHeads(theta=theta, num_classes=num_classes)


@dataclass(frozen=True)
class GcnTransition:
    """Transition source whose parameters are the GCN weights."""

    mapper: GcnMapper
    A_hat: Array
    latent_dim: int
    num_classes: int

    @property
    def num_annotators(self) -> int:
        """R."""
        return int(self.A_hat.shape[0])

    def heads(self) -> InterdependentHeads:
        """Current inter-dependent heads."""
        return assemble_heads(gcn_forward(self.mapper, self.A_hat)[-1], self.latent_dim, self.num_classes)

    def matrices(self, latent: Array, annotators: IntArray) -> Array:
        """T^j(x; theta'_j) per row."""
        return self.heads().matrices(latent, annotators)

    def parameters(self) -> list[Array]:
        """[W^0, ..., W^{L-1}]."""
        return list(self.mapper.weights)

    def with_parameters(self, params: Sequence[Array]) -> GcnTransition:
        """Copy with new GCN weights."""
        return replace(self, mapper=self.mapper.with_weights(params))

    def backward(self, latent: Array, annotators: IntArray, grad_matrices: Array) -> list[Array]:
        """Chain dLoss/dT through the head reshape and every graph convolution."""
        cache = _forward(self.mapper, self.A_hat, None)
        heads = assemble_heads(cache.features[-1], self.latent_dim, self.num_classes)
        dlogits = _logit_grad(heads.matrices(latent, annotators), grad_matrices)
        dtheta = np.zeros_like(heads.theta)
        np.add.at(dtheta, annotators, np.einsum("bh,bk->bhk", latent, dlogits))
        return gcn_backward(self.mapper, self.A_hat, cache, dtheta.reshape(heads.num_annotators, -1))


def gcn_loss(
    source: GcnTransition, latent: Array, annotators: IntArray, y_star: IntArray, labels: IntArray
) -> tuple[float, list[Array]]:
    """L3 on given pairs with gradients for every W^l."""
    loss, grad_matrices = bayes_row_loss(source.matrices(latent, annotators), y_star, labels)
    return loss, source.backward(latent, annotators, grad_matrices)


def train_gcn(
    mapper: GcnMapper,
    graph: SimilarityGraph,
    distilled: DistilledSet,
    global_net: TransitionNetwork,
    epochs: int,
    spec: OptimizerSpec,
    seed: int,
) -> tuple[GcnMapper, TrainingHistory]:
    """Fit the GCN weights to all distilled pairs through the frozen backbone."""
    if distilled.m == 0:
        raise PipelineError("train_gcn", "distilled set is empty")
    rows, annotators, labels = distilled.pairs()
    latent = global_net.latent(distilled.features()[rows])
    y_star = distilled.y_stars()[rows]
    source = GcnTransition(mapper, graph.A_hat, global_net.latent_dim, global_net.num_classes)
    # fail on a width mismatch before any epoch runs
    source.heads()

    def batch_loss(params: list[Array], batch: IntArray) -> tuple[float, list[Array]]:
        return gcn_loss(
            source.with_parameters(params), latent[batch], annotators[batch],
            y_star[batch], labels[batch],
        )

    logger.info("Training GCN mapping", pairs=int(labels.shape[0]), epochs=epochs)
    params, history = run_sgd(
        source.parameters(), labels.shape[0], epochs, spec,
        rng_stream(seed, "gcn-batches"), batch_loss, "gcn",
    )
    return mapper.with_weights(params), history


def gcn_objective(
    mapper: GcnMapper, graph: SimilarityGraph, distilled: DistilledSet, global_net: TransitionNetwork
) -> float:
    """L3 over every distilled pair."""
    rows, annotators, labels = distilled.pairs()
    source = GcnTransition(mapper, graph.A_hat, global_net.latent_dim, global_net.num_classes)
    latent = global_net.latent(distilled.features()[rows])
    loss, _ = bayes_row_loss(
        source.matrices(latent, annotators), distilled.y_stars()[rows], labels
    )
    return loss
