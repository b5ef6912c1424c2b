"""Executable checks of the GCN smoothing guarantees on concrete fixtures."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import numpy.typing as npt
import structlog

from src.domain.graphtransfer.gcn import GcnMapper, gcn_forward

Array = npt.NDArray[np.float64]
IntArray = npt.NDArray[np.int64]

CONTRACTION_SLACK = 1e-9
DEGREE_TOLERANCE = 1e-12

logger = structlog.get_logger(__name__)


@dataclass(frozen=True)
class PairBound:
    """Both sides of the contraction inequality for one node pair."""

    i: int
    j: int
    lhs: float
    rhs: float

    @property
    def holds(self) -> bool:
        """lhs <= rhs up to slack."""
        return self.lhs <= self.rhs + CONTRACTION_SLACK


@dataclass(frozen=True)
class ContractionReport:
    """Per-pair results, or the reason the check could not apply."""

    bounds: tuple[PairBound, ...] = ()
    skipped_reason: Optional[str] = None

    @property
    def skipped(self) -> bool:
        return self.skipped_reason is not None

    @property
    def violations(self) -> list[PairBound]:
        return [bound for bound in self.bounds if not bound.holds]

    @property
    def max_violation(self) -> float:
        """Largest lhs - rhs, 0 when every pair holds."""
        gaps = [bound.lhs - bound.rhs for bound in self.bounds]
        return max(0.0, *gaps) if gaps else 0.0


def uniform_degree(A_hat: Array) -> Optional[int]:
    """k when every row has k neighbors (self included) weighted 1/k, else None."""
    support = A_hat > 0
    degrees = support.sum(axis=1)
    k = int(degrees[0])
    if k == 0 or np.any(degrees != k) or not np.all(np.diag(support)):
        return None
    if np.any(np.abs(A_hat[support] - 1.0 / k) > DEGREE_TOLERANCE):
        return None
    return k


def contraction_check(
    weight: Array, A_hat: Array, H: Array, pairs: Sequence[tuple[int, int]]
) -> ContractionReport:
    """Compare |h_i' - h_j'| against |(h_i - h_j)/k + (Q_i - Q_j)/k| * |W|_2 per pair."""
    k = uniform_degree(A_hat)
    if k is None:
        logger.warning("Contraction check skipped", reason="non-uniform degree")
        return ContractionReport(skipped_reason="adjacency rows do not share a uniform degree k")
    next_h = np.maximum((A_hat @ H) @ weight, 0.0)
    support = A_hat > 0
    # Q_i sums the neighbor features other than node i itself
    neighbor_sums = support.astype(np.float64) @ H - H
    spectral = float(np.linalg.norm(weight, ord=2))
    bounds = []
    for i, j in pairs:
        lhs = float(np.linalg.norm(next_h[i] - next_h[j]))
        inner = (H[i] - H[j]) / k + (neighbor_sums[i] - neighbor_sums[j]) / k
        bounds.append(PairBound(i=i, j=j, lhs=lhs, rhs=float(np.linalg.norm(inner)) * spectral))
    return ContractionReport(bounds=tuple(bounds))


@dataclass(frozen=True)
class OrthogonalityResult:
    """Premises and outcome of the conditional orthogonality claim for one pair."""

    i: int
    j: int
    disjoint_inputs: bool
    disjoint_images: bool
    inner_product: float

    @property
    def premise_holds(self) -> bool:
        return self.disjoint_inputs and self.disjoint_images

    @property
    def orthogonal(self) -> bool:
        return self.inner_product == 0.0


@dataclass(frozen=True)
class OrthogonalityReport:
    """Results for every requested pair."""

    results: tuple[OrthogonalityResult, ...] = field(default_factory=tuple)

    @property
    def checked(self) -> list[OrthogonalityResult]:
        """Pairs whose premise was verified."""
        return [result for result in self.results if result.premise_holds]

    @property
    def passed(self) -> bool:
        """Every premise-checked pair is orthogonal."""
        return all(result.orthogonal for result in self.checked)


def orthogonality_check(
    weight: Array, A_hat: Array, H: Array, pairs: Sequence[tuple[int, int]]
) -> OrthogonalityReport:
    """Post-ReLU inner products for pairs whose aggregated inputs and images have disjoint supports."""
    aggregated = A_hat @ H
    images = aggregated @ weight
    features = np.maximum(images, 0.0)
    results = []
    for i, j in pairs:
        disjoint_inputs = not np.any((aggregated[i] != 0) & (aggregated[j] != 0))
        disjoint_images = not np.any((images[i] != 0) & (images[j] != 0))
        results.append(
            OrthogonalityResult(
                i=i,
                j=j,
                disjoint_inputs=bool(disjoint_inputs),
                disjoint_images=bool(disjoint_images),
                inner_product=float(features[i] @ features[j]),
            )
        )
    return OrthogonalityReport(results=tuple(results))


def group_equality_check(mapper: GcnMapper, A_hat: Array, groups: IntArray) -> bool:
    """Whether same-group rows of every H^l (l >= 1) are bitwise equal."""
    for layer, features in enumerate(gcn_forward(mapper, A_hat)[1:], start=1):
        for group in np.unique(groups):
            members = np.flatnonzero(groups == group)
            reference = features[members[0]]
            if any(not np.array_equal(features[m], reference) for m in members[1:]):
                logger.debug("Group rows differ", layer=layer, group=int(group))
                return False
    return True
