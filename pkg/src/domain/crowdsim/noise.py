"""Annotator- and instance-dependent flip distributions."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

from src.domain.exceptions import ConfigError, NumericalError, ShapeError
from src.domain.tensornet import rng_stream, softmax_rows
from src.domain.value_objects import FlipRateScope

Array = npt.NDArray[np.float64]
IntArray = npt.NDArray[np.int64]

FLIP_RATE_STD = 0.1
MAX_REJECTION_ROUNDS = 1_000_000


def sample_flip_rates(count: int, rho: float, rho_max: float, seed: int) -> Array:
    """Draw `count` rates from N(rho, 0.1^2) truncated to [0, rho_max] by rejection."""
    if not 0.0 <= rho <= rho_max <= 1.0:
        raise ConfigError(f"need 0 <= rho <= rho_max <= 1, got rho={rho}, rho_max={rho_max}")
    if count < 1:
        raise ConfigError("flip-rate count must be positive")
    if rho_max == 0.0:
        return np.zeros(count)

    rng = rng_stream(seed, "flip-rates")
    rates = np.empty(count)
    filled = 0
    rounds = 0
    while filled < count:
        rounds += 1
        if rounds > MAX_REJECTION_ROUNDS:
            raise NumericalError("truncated-normal rejection sampling did not terminate")
        draws = rng.normal(rho, FLIP_RATE_STD, size=count - filled)
        accepted = draws[(draws >= 0.0) & (draws <= rho_max)]
        rates[filled : filled + accepted.size] = accepted
        filled += accepted.size
    return rates


def flip_distributions(
    features: Array, true_labels: IntArray, projections: Array, flip_rates: Array
) -> Array:
    """Batched flip distributions; `projections` is (b, C, d) or (C, d)."""
    if projections.ndim == 2:
        scores = features @ projections.T
    else:
        scores = np.einsum("bd,bcd->bc", features, projections)
    rows = np.arange(features.shape[0])
    scores = scores.copy()
    scores[rows, true_labels] = -np.inf
    probs = flip_rates[:, None] * softmax_rows(scores)
    probs[rows, true_labels] = 1.0 - flip_rates
    return probs


def instance_flip_distribution(x: Array, y: int, projections: Array, q: float) -> Array:
    """Off-diagonal mass q spread by softmax(x . d_k); diagonal entry 1 - q."""
    if not 0.0 <= q <= 1.0:
        raise ConfigError(f"flip rate must lie in [0, 1], got {q}")
    if projections.ndim != 2 or projections.shape[1] != x.shape[0]:
        raise ShapeError(f"projections {projections.shape} vs instance {x.shape}")
    return flip_distributions(
        x[None, :], np.array([y], dtype=np.int64), projections, np.array([q])
    )[0]


@dataclass(frozen=True)
class AnnotatorPool:
    """Annotators partitioned into groups sharing projections d_1..d_C."""

    group_of: IntArray
    flip_rates: Array
    projections: Array
    rho: float
    rho_max: float
    scope: FlipRateScope = FlipRateScope.GROUP

    def __post_init__(self) -> None:
        """Validate group structure and rate bounds."""
        if self.num_annotators % self.num_groups:
            raise ConfigError("annotator count must be divisible by the group count")
        if self.flip_rates.shape != (self.num_annotators,):
            raise ShapeError("one flip rate per annotator is required")
        if np.any(self.flip_rates < 0) or np.any(self.flip_rates > self.rho_max):
            raise ConfigError("flip rates must lie in [0, rho_max]")
        if self.group_of.min() < 0 or self.group_of.max() >= self.num_groups:
            raise ConfigError("group assignment out of range")

    @property
    def num_annotators(self) -> int:
        """R."""
        return int(self.group_of.shape[0])

    @property
    def num_groups(self) -> int:
        """G."""
        return int(self.projections.shape[0])

    @property
    def num_classes(self) -> int:
        """C."""
        return int(self.projections.shape[1])

    def transition_matrices(self, features: Array, annotators: IntArray) -> Array:
        """Ground-truth (b, C, C) matrices; row c is the flip distribution of class c."""
        projections = self.projections[self.group_of[annotators]]
        scores = np.einsum("bd,bcd->bc", features, projections)
        num_classes = self.num_classes
        tiled = np.repeat(scores[:, None, :], num_classes, axis=1)
        diagonal = np.arange(num_classes)
        tiled[:, diagonal, diagonal] = -np.inf
        rates = self.flip_rates[annotators]
        matrices = rates[:, None, None] * softmax_rows(tiled)
        matrices[:, diagonal, diagonal] = 1.0 - rates[:, None]
        return matrices

    def transition_matrix(self, x: Array, annotator: int) -> Array:
        """Ground-truth C x C matrix for one instance and annotator."""
        return self.transition_matrices(x[None, :], np.array([annotator], dtype=np.int64))[0]


def build_pool(
    num_annotators: int,
    num_groups: int,
    dim: int,
    num_classes: int,
    rho: float,
    rho_max: float,
    seed: int,
    scope: FlipRateScope = FlipRateScope.GROUP,
) -> AnnotatorPool:
    """Contiguous groups of R/G annotators with standard-normal projections."""
    if num_groups < 1 or num_annotators < 1 or num_annotators % num_groups:
        raise ConfigError(f"R={num_annotators} must be a positive multiple of G={num_groups}")
    per_group = num_annotators // num_groups
    group_of = np.arange(num_annotators, dtype=np.int64) // per_group
    projections = rng_stream(seed, "projections").standard_normal((num_groups, num_classes, dim))
    if scope is FlipRateScope.GROUP:
        flip_rates = sample_flip_rates(num_groups, rho, rho_max, seed)[group_of]
    else:
        flip_rates = sample_flip_rates(num_annotators, rho, rho_max, seed)
    return AnnotatorPool(
        group_of=group_of,
        flip_rates=flip_rates,
        projections=projections,
        rho=rho,
        rho_max=rho_max,
        scope=scope,
    )
