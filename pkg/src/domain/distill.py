"""Warmup classifier and distilled examples with inferred Bayes labels."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import numpy.typing as npt
import structlog

from src.domain.crowdsim import CrowdDataset
from src.domain.exceptions import ConfigError, ShapeError
from src.domain.tensornet import (
    MlpNetwork,
    OptimizerSpec,
    TrainingHistory,
    predict,
    rng_stream,
    train_softmax_classifier,
)
from src.domain.value_objects import Activation, Split

Array = npt.NDArray[np.float64]
IntArray = npt.NDArray[np.int64]

DEFAULT_TAU = 0.8
DEFAULT_MIN_EXAMPLES = 5

logger = structlog.get_logger(__name__)


@dataclass(frozen=True)
class DistilledExample:
    """An instance whose warmup posterior cleared the threshold."""

    instance_id: int
    features: Array
    y_star: int
    annotations: tuple[tuple[int, int], ...]


@dataclass(frozen=True)
class DistilledSet:
    """Distilled examples plus flat (example, annotator, label) pairs for training."""

    examples: tuple[DistilledExample, ...]
    num_annotators: int
    num_classes: int
    per_annotator: dict[int, tuple[int, ...]] = field(default_factory=dict)

    @classmethod
    def build(
        cls, examples: Sequence[DistilledExample], num_annotators: int, num_classes: int
    ) -> DistilledSet:
        """Index examples by the annotators who labeled them."""
        index: dict[int, list[int]] = {}
        for position, example in enumerate(examples):
            for annotator, _ in example.annotations:
                index.setdefault(annotator, []).append(position)
        return cls(
            examples=tuple(examples),
            num_annotators=num_annotators,
            num_classes=num_classes,
            per_annotator={j: tuple(rows) for j, rows in sorted(index.items())},
        )

    @property
    def m(self) -> int:
        """Distilled instance count."""
        return len(self.examples)

    def m_j(self, annotator: int) -> int:
        """Distilled examples labeled by one annotator."""
        return len(self.per_annotator.get(annotator, ()))

    def annotator_counts(self) -> IntArray:
        """m_j for every annotator."""
        return np.array([self.m_j(j) for j in range(self.num_annotators)], dtype=np.int64)

    def features(self) -> Array:
        """(m, d) feature matrix in example order."""
        if not self.examples:
            return np.empty((0, 0))
        return np.stack([example.features for example in self.examples])

    def y_stars(self) -> IntArray:
        """Inferred Bayes labels in example order."""
        return np.array([example.y_star for example in self.examples], dtype=np.int64)

    def pairs(self, annotator: Optional[int] = None) -> tuple[IntArray, IntArray, IntArray]:
        """(example position, annotator, noisy label) for every attached annotation."""
        rows: list[int] = []
        annotators: list[int] = []
        labels: list[int] = []
        positions = (
            range(self.m) if annotator is None else self.per_annotator.get(annotator, ())
        )
        for position in positions:
            for j, label in self.examples[position].annotations:
                if annotator is None or j == annotator:
                    rows.append(position)
                    annotators.append(j)
                    labels.append(label)
        return (
            np.array(rows, dtype=np.int64),
            np.array(annotators, dtype=np.int64),
            np.array(labels, dtype=np.int64),
        )

    def class_counts(self) -> IntArray:
        """Distilled examples per inferred Bayes class."""
        return np.bincount(self.y_stars(), minlength=self.num_classes).astype(np.int64)

    def insufficient_annotators(self, min_examples: int = DEFAULT_MIN_EXAMPLES) -> list[int]:
        """Annotators with m_j below the floor."""
        return [j for j in range(self.num_annotators) if self.m_j(j) < min_examples]


def warmup_network(dim: int, num_classes: int, hidden: Sequence[int], seed: int) -> MlpNetwork:
    """Softmax MLP used for warmup and for the final classifier."""
    return MlpNetwork.initialize(
        [dim, *hidden, num_classes],
        rng_stream(seed, "warmup-init"),
        final_activation=Activation.SOFTMAX_ROWS,
    )


def train_warmup(
    crowd: CrowdDataset,
    epochs: int,
    spec: OptimizerSpec,
    seed: int,
    hidden: Sequence[int] = (32, 32),
) -> tuple[MlpNetwork, TrainingHistory]:
    """Fit a classifier to all pooled (x_i, noisy label) training pairs."""
    mask = crowd.mask(Split.TRAIN)
    if not np.any(mask):
        raise ConfigError("no training annotations to warm up on")
    features = crowd.base.features[crowd.instance_ids[mask]]
    labels = crowd.labels[mask]
    net = warmup_network(crowd.base.dim, crowd.num_classes, hidden, seed)
    logger.info("Training warmup classifier", pairs=int(labels.shape[0]), epochs=epochs)
    return train_softmax_classifier(
        net, features, labels, epochs, spec, rng_stream(seed, "warmup-batches"), "warmup"
    )


def _check_tau(tau: float, num_classes: int) -> None:
    if not 1.0 / num_classes < tau <= 1.0:
        raise ConfigError(f"threshold tau={tau} must lie in (1/C, 1] = ({1.0 / num_classes:.4f}, 1]")


def distill_from_posteriors(
    posteriors: Array,
    instance_ids: IntArray,
    crowd: CrowdDataset,
    tau: float,
) -> DistilledSet:
    """Keep instances whose max posterior strictly exceeds tau."""
    _check_tau(tau, crowd.num_classes)
    if posteriors.shape != (instance_ids.shape[0], crowd.num_classes):
        raise ShapeError(f"posteriors {posteriors.shape} for {instance_ids.shape[0]} instances")
    sets = crowd.annotation_sets()
    examples = []
    for row, instance in enumerate(instance_ids):
        if posteriors[row].max() <= tau:
            continue
        positions = sets.get(int(instance))
        if positions is None:
            continue
        examples.append(
            DistilledExample(
                instance_id=int(instance),
                features=crowd.base.features[instance],
                y_star=int(np.argmax(posteriors[row])),
                annotations=tuple(
                    (int(crowd.annotator_ids[p]), int(crowd.labels[p])) for p in positions
                ),
            )
        )
    return DistilledSet.build(examples, crowd.num_annotators, crowd.num_classes)


def balance_classes(distilled: DistilledSet, seed: int) -> DistilledSet:
    """Subsample every class down to the smallest non-empty class count."""
    y_stars = distilled.y_stars()
    counts = distilled.class_counts()
    present = counts[counts > 0]
    if present.size == 0:
        return distilled
    target = int(present.min())
    rng = rng_stream(seed, "distill-balance")
    keep: list[int] = []
    for label in range(distilled.num_classes):
        rows = np.flatnonzero(y_stars == label)
        if rows.size:
            keep.extend(sorted(rng.choice(rows, size=target, replace=False).tolist()))
    examples = [distilled.examples[i] for i in sorted(keep)]
    return DistilledSet.build(examples, distilled.num_annotators, distilled.num_classes)


def collect_distilled(
    classifier: MlpNetwork,
    crowd: CrowdDataset,
    tau: float = DEFAULT_TAU,
    balance: bool = False,
    seed: int = 0,
) -> DistilledSet:
    """Distill annotated training instances by thresholding warmup posteriors."""
    _check_tau(tau, crowd.num_classes)
    instance_ids = np.unique(crowd.instance_ids[crowd.mask(Split.TRAIN)])
    if instance_ids.size == 0:
        return DistilledSet.build([], crowd.num_annotators, crowd.num_classes)
    posteriors = predict(classifier, crowd.base.features[instance_ids])
    distilled = distill_from_posteriors(posteriors, instance_ids, crowd, tau)
    if balance:
        distilled = balance_classes(distilled, seed)
    logger.info(
        "Collected distilled examples",
        m=distilled.m,
        candidates=int(instance_ids.shape[0]),
        class_counts=distilled.class_counts().tolist(),
    )
    return distilled
