"""Mini-batch SGD loops shared by every trainer."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import numpy.typing as npt
import structlog

from src.domain.exceptions import ConfigError
from src.domain.tensornet.losses import batch_cross_entropy
from src.domain.tensornet.network import MlpNetwork, backward, forward
from src.domain.tensornet.optim import SgdState, minibatches, sgd_step, step_decay

Array = npt.NDArray[np.float64]
IntArray = npt.NDArray[np.int64]
BatchLoss = Callable[[list[Array], IntArray], tuple[float, list[Array]]]

logger = structlog.get_logger(__name__)


@dataclass(frozen=True)
class OptimizerSpec:
    """SGD hyperparameters and step-decay schedule."""

    learning_rate: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 0.0
    batch_size: int = 128
    milestones: tuple[int, ...] = ()
    lr_decay: float = 0.1

    def scaled(self, factor: float) -> OptimizerSpec:
        """Same schedule at `factor` times the learning rate."""
        return OptimizerSpec(
            learning_rate=self.learning_rate * factor,
            momentum=self.momentum,
            weight_decay=self.weight_decay,
            batch_size=self.batch_size,
            milestones=self.milestones,
            lr_decay=self.lr_decay,
        )


@dataclass
class TrainingHistory:
    """Mean loss per epoch, averaged over the epoch's samples."""

    losses: list[float] = field(default_factory=list)

    @property
    def final_loss(self) -> float:
        """Last recorded epoch loss, NaN when nothing trained."""
        return self.losses[-1] if self.losses else float("nan")


def run_sgd(
    params: Sequence[Array],
    count: int,
    epochs: int,
    spec: OptimizerSpec,
    rng: np.random.Generator,
    batch_loss: BatchLoss,
    name: str = "model",
    lr_scales: Sequence[float] = (),
) -> tuple[list[Array], TrainingHistory]:
    """Optimize `params` over shuffled batches of range(count) for `epochs` epochs.

    `lr_scales` multiplies the scheduled learning rate per parameter.
    """
    if epochs < 0:
        raise ConfigError("epoch count must be non-negative")
    current = [np.array(param, copy=True) for param in params]
    state = SgdState.for_parameters(
        current, spec.learning_rate, spec.momentum, spec.weight_decay, lr_scales
    )
    history = TrainingHistory()
    for epoch in range(epochs):
        state = state.with_learning_rate(
            step_decay(spec.learning_rate, epoch, spec.milestones, spec.lr_decay)
        )
        total = 0.0
        for batch in minibatches(count, spec.batch_size, rng):
            loss, grads = batch_loss(current, batch)
            current, state = sgd_step(current, grads, state)
            total += loss * batch.shape[0]
        history.losses.append(total / count if count else float("nan"))
        logger.debug("Epoch finished", model=name, epoch=epoch, loss=history.losses[-1])
    return current, history


def train_softmax_classifier(
    net: MlpNetwork,
    features: Array,
    labels: IntArray,
    epochs: int,
    spec: OptimizerSpec,
    rng: np.random.Generator,
    name: str = "classifier",
) -> tuple[MlpNetwork, TrainingHistory]:
    """Minimize mean cross-entropy of a softmax network on (features, labels)."""

    def batch_loss(params: list[Array], batch: IntArray) -> tuple[float, list[Array]]:
        model = net.with_parameters(params)
        probs, cache = forward(model, features[batch])
        loss, grad = batch_cross_entropy(labels[batch], probs)
        return loss, backward(model, cache, grad)

    params, history = run_sgd(
        net.parameters(), labels.shape[0], epochs, spec, rng, batch_loss, name
    )
    return net.with_parameters(params), history
