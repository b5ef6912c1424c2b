"""SGD with momentum and weight decay."""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterator, Sequence

import numpy as np
import numpy.typing as npt

from src.domain.exceptions import ConfigError, ShapeError

Array = npt.NDArray[np.float64]


@dataclass(frozen=True)
class SgdState:
    """Optimizer hyperparameters plus one velocity buffer per parameter."""

    learning_rate: float
    momentum: float
    weight_decay: float
    velocity: tuple[Array, ...]
    lr_scales: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        """Validate hyperparameters."""
        if self.lr_scales and len(self.lr_scales) != len(self.velocity):
            raise ShapeError("one learning-rate scale per parameter")
        if self.learning_rate < 0:
            raise ConfigError("learning rate must be non-negative")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError("momentum must lie in [0, 1)")
        if self.weight_decay < 0:
            raise ConfigError("weight decay must be non-negative")

    @classmethod
    def for_parameters(
        cls,
        params: Sequence[Array],
        learning_rate: float,
        momentum: float = 0.9,
        weight_decay: float = 0.0,
        lr_scales: Sequence[float] = (),
    ) -> SgdState:
        """Fresh state with zero velocity mirroring the parameter shapes."""
        return cls(
            learning_rate=learning_rate,
            momentum=momentum,
            weight_decay=weight_decay,
            velocity=tuple(np.zeros_like(param) for param in params),
            lr_scales=tuple(lr_scales),
        )

    def with_learning_rate(self, learning_rate: float) -> SgdState:
        """Same state, new learning rate."""
        return replace(self, learning_rate=learning_rate)


def sgd_step(
    params: Sequence[Array], grads: Sequence[Array], state: SgdState
) -> tuple[list[Array], SgdState]:
    """v <- momentum * v + (grad + weight_decay * param); param <- param - scale * lr * v."""
    if not len(params) == len(grads) == len(state.velocity):
        raise ShapeError(
            f"{len(params)} params, {len(grads)} grads, {len(state.velocity)} velocity buffers"
        )
    new_params: list[Array] = []
    new_velocity: list[Array] = []
    scales = state.lr_scales or (1.0,) * len(params)
    for param, grad, velocity, scale in zip(params, grads, state.velocity, scales):
        if not param.shape == grad.shape == velocity.shape:
            raise ShapeError(
                f"param {param.shape}, grad {grad.shape}, velocity {velocity.shape}"
            )
        step = state.momentum * velocity + (grad + state.weight_decay * param)
        new_velocity.append(step)
        new_params.append(param - scale * state.learning_rate * step)
    return new_params, replace(state, velocity=tuple(new_velocity))


def step_decay(base_lr: float, epoch: int, milestones: Sequence[int], decay: float) -> float:
    """Learning rate after multiplying by `decay` at every passed milestone."""
    passed = sum(1 for milestone in milestones if epoch >= milestone)
    return float(base_lr * decay**passed)


def minibatches(
    count: int, batch_size: int, rng: np.random.Generator
) -> Iterator[npt.NDArray[np.int64]]:
    """Shuffled index batches covering range(count) once."""
    if batch_size < 1:
        raise ConfigError("batch size must be positive")
    order = rng.permutation(count)
    for start in range(0, count, batch_size):
        yield order[start : start + batch_size]
