"""Global and per-annotator noise-transition networks."""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Protocol, Sequence

import numpy as np
import numpy.typing as npt
import structlog

from src.domain.distill import DEFAULT_MIN_EXAMPLES, DistilledSet
from src.domain.exceptions import ContractError, PipelineError, ShapeError
from src.domain.tensornet import (
    PROB_FLOOR,
    MlpNetwork,
    OptimizerSpec,
    TrainingHistory,
    backward,
    ensure_finite,
    forward,
    glorot_uniform,
    predict,
    rng_stream,
    run_sgd,
    softmax_rows,
    softmax_rows_backward,
)
from src.domain.value_objects import Activation

Array = npt.NDArray[np.float64]
IntArray = npt.NDArray[np.int64]

ROW_SUM_TOLERANCE = 1e-9

logger = structlog.get_logger(__name__)


class TransitionSource(Protocol):
    """Anything that emits a C x C transition matrix per (latent, annotator)."""

    num_classes: int

    def matrices(self, latent: Array, annotators: IntArray) -> Array:
        """(b, C, C) row-stochastic matrices."""
        ...

    def parameters(self) -> list[Array]:
        """Trainable arrays."""
        ...

    def with_parameters(self, params: Sequence[Array]) -> TransitionSource:
        """Copy carrying new parameter values."""
        ...

    def backward(self, latent: Array, annotators: IntArray, grad_matrices: Array) -> list[Array]:
        """Gradients w.r.t. `parameters()` given dLoss/dT."""
        ...


def head_matrices(latent: Array, weight: Array, bias: Array, num_classes: int) -> Array:
    """Row-wise softmax of reshape(g(x) . theta + b); weight (h, C*C) or (b, h, C*C)."""
    if weight.ndim == 2:
        logits = latent @ weight + bias
    else:
        logits = np.einsum("bh,bhk->bk", latent, weight) + bias
    return softmax_rows(logits.reshape(-1, num_classes, num_classes))


def check_row_stochastic(matrices: Array, tol: float = ROW_SUM_TOLERANCE) -> None:
    """Raise unless every row is non-negative and sums to one."""
    if np.any(matrices < 0) or np.any(np.abs(matrices.sum(axis=-1) - 1.0) > tol):
        raise ContractError("transition matrix is not row-stochastic")


def bayes_row_loss(matrices: Array, y_star: IntArray, labels: IntArray) -> tuple[float, Array]:
    """Mean -log T[y*, noisy label] and its gradient w.r.t. the matrices."""
    rows = np.arange(labels.shape[0])
    picked = np.maximum(matrices[rows, y_star, labels], PROB_FLOOR)
    grad = np.zeros_like(matrices)
    grad[rows, y_star, labels] = -1.0 / (picked * labels.shape[0])
    return float(-np.mean(np.log(picked))), grad


def _logit_grad(matrices: Array, grad_matrices: Array) -> Array:
    flat = softmax_rows_backward(matrices, grad_matrices)
    return flat.reshape(matrices.shape[0], -1)


@dataclass(frozen=True)
class GlobalHead:
    """One linear head shared by every annotator."""

    weight: Array
    bias: Array
    num_classes: int

    def matrices(self, latent: Array, annotators: IntArray) -> Array:
        """Same head regardless of annotator."""
        return head_matrices(latent, self.weight, self.bias, self.num_classes)

    def parameters(self) -> list[Array]:
        """[weight, bias]."""
        return [self.weight, self.bias]

    def with_parameters(self, params: Sequence[Array]) -> GlobalHead:
        """Copy with new head values."""
        return replace(self, weight=params[0], bias=params[1])

    def backward(self, latent: Array, annotators: IntArray, grad_matrices: Array) -> list[Array]:
        """Head gradients."""
        dlogits = _logit_grad(self.matrices(latent, annotators), grad_matrices)
        return [latent.T @ dlogits, dlogits.sum(axis=0)]


@dataclass(frozen=True)
class TransitionNetwork:
    """Backbone g(.) plus a linear head emitting C x C logits."""

    backbone: MlpNetwork
    head_weight: Array
    head_bias: Array
    num_classes: int

    def __post_init__(self) -> None:
        """Validate head shape against backbone and class count."""
        expected = (self.backbone.output_dim, self.num_classes * self.num_classes)
        if self.head_weight.shape != expected or self.head_bias.shape != expected[1:]:
            raise ShapeError(
                f"head {self.head_weight.shape}/{self.head_bias.shape}, expected {expected}"
            )

    @classmethod
    def initialize(
        cls, dim: int, num_classes: int, hidden: Sequence[int], latent_dim: int, seed: int
    ) -> TransitionNetwork:
        """Fresh backbone with ReLU latent and Glorot head."""
        rng = rng_stream(seed, "transition-init")
        backbone = MlpNetwork.initialize(
            [dim, *hidden, latent_dim], rng, final_activation=Activation.RELU
        )
        cc = num_classes * num_classes
        return cls(
            backbone=backbone,
            head_weight=glorot_uniform(latent_dim, cc, rng),
            head_bias=np.zeros(cc),
            num_classes=num_classes,
        )

    @property
    def latent_dim(self) -> int:
        """h."""
        return self.backbone.output_dim

    def latent(self, features: Array) -> Array:
        """g(x) for a batch."""
        return predict(self.backbone, features)

    def head(self) -> GlobalHead:
        """The head as a transition source over a frozen backbone."""
        return GlobalHead(self.head_weight, self.head_bias, self.num_classes)

    def parameters(self) -> list[Array]:
        """Backbone parameters then [head weight, head bias]."""
        return [*self.backbone.parameters(), self.head_weight, self.head_bias]

    def with_parameters(self, params: Sequence[Array]) -> TransitionNetwork:
        """Copy with new values for every parameter."""
        split = len(params) - 2
        return replace(
            self,
            backbone=self.backbone.with_parameters(params[:split]),
            head_weight=params[split],
            head_bias=params[split + 1],
        )


def predict_transition(net: TransitionNetwork, x: Array) -> Array:
    """T(x) for one instance (C x C) or a batch (b x C x C)."""
    single = x.ndim == 1
    batch = x[None, :] if single else x
    if batch.shape[1] != net.backbone.input_dim:
        raise ShapeError(f"instance dim {batch.shape[1]} vs backbone {net.backbone.input_dim}")
    matrices = head_matrices(net.latent(batch), net.head_weight, net.head_bias, net.num_classes)
    ensure_finite(matrices, "transition matrices")
    return matrices[0] if single else matrices


def global_loss(
    net: TransitionNetwork, features: Array, y_star: IntArray, labels: IntArray
) -> tuple[float, list[Array]]:
    """L1 over (features, y*, noisy label) pairs with gradients for all parameters."""
    latent, cache = forward(net.backbone, features)
    matrices = head_matrices(latent, net.head_weight, net.head_bias, net.num_classes)
    loss, grad_matrices = bayes_row_loss(matrices, y_star, labels)
    dlogits = _logit_grad(matrices, grad_matrices)
    backbone_grads = backward(net.backbone, cache, dlogits @ net.head_weight.T)
    return loss, [*backbone_grads, latent.T @ dlogits, dlogits.sum(axis=0)]


def global_objective(net: TransitionNetwork, distilled: DistilledSet) -> float:
    """L1 over every distilled annotation pair."""
    rows, _, labels = distilled.pairs()
    loss, _ = global_loss(net, distilled.features()[rows], distilled.y_stars()[rows], labels)
    return loss


def train_global(
    distilled: DistilledSet,
    epochs: int,
    spec: OptimizerSpec,
    seed: int,
    hidden: Sequence[int] = (32, 32),
    latent_dim: int = 16,
) -> tuple[TransitionNetwork, TrainingHistory]:
    """Fit backbone and head to the pooled distilled pairs."""
    if distilled.m == 0:
        raise PipelineError("train_global", "distilled set is empty")
    features = distilled.features()
    rows, _, labels = distilled.pairs()
    pair_features = features[rows]
    pair_y_star = distilled.y_stars()[rows]
    net = TransitionNetwork.initialize(
        features.shape[1], distilled.num_classes, hidden, latent_dim, seed
    )

    def batch_loss(params: list[Array], batch: IntArray) -> tuple[float, list[Array]]:
        return global_loss(
            net.with_parameters(params), pair_features[batch], pair_y_star[batch], labels[batch]
        )

    logger.info("Training global transition network", pairs=int(labels.shape[0]), epochs=epochs)
    params, history = run_sgd(
        net.parameters(), labels.shape[0], epochs, spec,
        rng_stream(seed, "global-batches"), batch_loss, "global",
    )
    return net.with_parameters(params), history


def head_loss(
    latent: Array, weight: Array, bias: Array, y_star: IntArray, labels: IntArray, num_classes: int
) -> tuple[float, list[Array]]:
    """Cross-entropy of row y* of one head's matrices, gradients for [weight, bias]."""
    matrices = head_matrices(latent, weight, bias, num_classes)
    loss, grad_matrices = bayes_row_loss(matrices, y_star, labels)
    dlogits = _logit_grad(matrices, grad_matrices)
    return loss, [latent.T @ dlogits, dlogits.sum(axis=0)]


@dataclass(frozen=True)
class HeadFit:
    """Fine-tuning outcome for one annotator."""

    weight: Array
    bias: Array
    fallback: bool
    history: TrainingHistory


def finetune_individual(
    global_net: TransitionNetwork,
    distilled: DistilledSet,
    annotator: int,
    epochs: int,
    spec: OptimizerSpec,
    seed: int,
    min_examples: int = DEFAULT_MIN_EXAMPLES,
) -> HeadFit:
    """Fine-tune a copy of the global head on one annotator's distilled pairs."""
    if distilled.m_j(annotator) < min_examples:
        return HeadFit(
            global_net.head_weight.copy(), global_net.head_bias.copy(), True, TrainingHistory()
        )
    rows, _, labels = distilled.pairs(annotator)
    latent = global_net.latent(distilled.features()[rows])
    y_star = distilled.y_stars()[rows]

    def batch_loss(params: list[Array], batch: IntArray) -> tuple[float, list[Array]]:
        return head_loss(
            latent[batch], params[0], params[1], y_star[batch], labels[batch],
            global_net.num_classes,
        )

    params, history = run_sgd(
        [global_net.head_weight, global_net.head_bias], labels.shape[0], epochs, spec,
        rng_stream(seed, "finetune", annotator), batch_loss, f"head-{annotator}",
    )
    return HeadFit(params[0], params[1], False, history)


@dataclass(frozen=True)
class IndividualHeads:
    """One head per annotator; fallback annotators carry the global head."""

    weights: Array
    biases: Array
    fallback: npt.NDArray[np.bool_]
    num_classes: int

    def __post_init__(self) -> None:
        """Every annotator maps to exactly one head."""
        count = self.weights.shape[0]
        if self.biases.shape[0] != count or self.fallback.shape != (count,):
            raise ShapeError("heads, biases and fallback flags disagree on annotator count")

    @property
    def num_annotators(self) -> int:
        """R."""
        return int(self.weights.shape[0])

    def head_vectors(self) -> Array:
        """(R, h*C*C) flattened head weights."""
        return self.weights.reshape(self.num_annotators, -1)

    def matrices(self, latent: Array, annotators: IntArray) -> Array:
        """Per-row annotator heads."""
        return head_matrices(
            latent, self.weights[annotators], self.biases[annotators], self.num_classes
        )

    def parameters(self) -> list[Array]:
        """[weights, biases]."""
        return [self.weights, self.biases]

    def with_parameters(self, params: Sequence[Array]) -> IndividualHeads:
        """Copy with new head values."""
        return replace(self, weights=params[0], biases=params[1])

    def backward(self, latent: Array, annotators: IntArray, grad_matrices: Array) -> list[Array]:
        """Scatter per-row head gradients back to their annotators."""
        dlogits = _logit_grad(self.matrices(latent, annotators), grad_matrices)
        dweights = np.zeros_like(self.weights)
        dbiases = np.zeros_like(self.biases)
        np.add.at(dweights, annotators, np.einsum("bh,bk->bhk", latent, dlogits))
        np.add.at(dbiases, annotators, dlogits)
        return [dweights, dbiases]


def finetune_all(
    global_net: TransitionNetwork,
    distilled: DistilledSet,
    epochs: int,
    spec: OptimizerSpec,
    seed: int,
    min_examples: int = DEFAULT_MIN_EXAMPLES,
) -> IndividualHeads:
    """Fine-tune every annotator's head; each uses its own (seed, annotator) stream."""
    fits = [
        finetune_individual(global_net, distilled, j, epochs, spec, seed, min_examples)
        for j in range(distilled.num_annotators)
    ]
    fallback = np.array([fit.fallback for fit in fits], dtype=bool)
    if fallback.any():
        logger.warning(
            "Annotators fall back to the global head",
            count=int(fallback.sum()),
            min_examples=min_examples,
        )
    return IndividualHeads(
        weights=np.stack([fit.weight for fit in fits]),
        biases=np.stack([fit.bias for fit in fits]),
        fallback=fallback,
        num_classes=global_net.num_classes,
    )


def individual_objective(
    heads: IndividualHeads, global_net: TransitionNetwork, distilled: DistilledSet, annotator: int
) -> float:
    """L2 for one annotator under its current head."""
    rows, _, labels = distilled.pairs(annotator)
    if rows.size == 0:
        return float("nan")
    latent = global_net.latent(distilled.features()[rows])
    loss, _ = head_loss(
        latent, heads.weights[annotator], heads.biases[annotator],
        distilled.y_stars()[rows], labels, heads.num_classes,
    )
    return loss
