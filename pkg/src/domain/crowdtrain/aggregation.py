"""Label aggregation baselines: majority vote and Dawid-Skene EM."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import numpy.typing as npt
import structlog
from scipy.special import logsumexp

from src.domain.crowdsim import CrowdDataset
from src.domain.exceptions import ConfigError, DataError
from src.domain.tensornet import PROB_FLOOR
from src.domain.value_objects import Method, Split

Array = npt.NDArray[np.float64]
IntArray = npt.NDArray[np.int64]

DS_SMOOTHING = 0.01
DS_MAX_ITERS = 50
DS_TOLERANCE = 1e-6

logger = structlog.get_logger(__name__)


def majority_vote(labels: Sequence[int] | IntArray, num_classes: Optional[int] = None) -> int:
    """Most frequent label; ties go to the lowest class index."""
    votes = np.asarray(labels, dtype=np.int64)
    if votes.size == 0:
        raise DataError("majority vote needs at least one annotation")
    return int(np.argmax(np.bincount(votes, minlength=num_classes or 0)))


@dataclass(frozen=True)
class AnnotationTable:
    """Annotations re-indexed to contiguous item ids 0..N-1."""

    items: IntArray
    annotators: IntArray
    labels: IntArray
    num_items: int
    num_annotators: int
    num_classes: int
    instance_ids: IntArray = field(default_factory=lambda: np.empty(0, dtype=np.int64))

    def __post_init__(self) -> None:
        """Check every item has at least one annotation."""
        if self.num_items == 0:
            raise DataError("no annotations to aggregate")
        if np.unique(self.items).shape[0] != self.num_items:
            raise DataError("every item needs at least one annotation")

    @classmethod
    def from_crowd(cls, crowd: CrowdDataset, splits: Sequence[Split] = (Split.TRAIN,)) -> AnnotationTable:
        """Annotations of instances in the given splits."""
        mask = crowd.mask(*splits)
        instance_ids, items = np.unique(crowd.instance_ids[mask], return_inverse=True)
        return cls(
            items=items.astype(np.int64),
            annotators=crowd.annotator_ids[mask],
            labels=crowd.labels[mask],
            num_items=int(instance_ids.shape[0]),
            num_annotators=crowd.num_annotators,
            num_classes=crowd.num_classes,
            instance_ids=instance_ids.astype(np.int64),
        )

    def vote_counts(self) -> Array:
        """(N, C) label counts per item."""
        counts = np.zeros((self.num_items, self.num_classes))
        np.add.at(counts, (self.items, self.labels), 1.0)
        return counts


@dataclass(frozen=True)
class AggregatedLabels:
    """One inferred label per annotated instance."""

    instance_ids: IntArray
    labels: IntArray
    method: Method
    posteriors: Optional[Array] = None


def aggregate_majority(table: AnnotationTable) -> AggregatedLabels:
    """Majority vote for every item."""
    labels = np.argmax(table.vote_counts(), axis=1).astype(np.int64)
    return AggregatedLabels(instance_ids=table.instance_ids, labels=labels, method=Method.MV)


@dataclass(frozen=True)
class DsModel:
    """Class prior and one confusion matrix per annotator."""

    prior: Array
    confusions: Array

    def max_change(self, other: DsModel) -> float:
        """Largest absolute parameter difference."""
        return float(
            max(np.max(np.abs(self.prior - other.prior)), np.max(np.abs(self.confusions - other.confusions)))
        )


def _log_joint(model: DsModel, table: AnnotationTable) -> Array:
    log_conf = np.log(np.maximum(model.confusions, PROB_FLOOR))
    joint = np.tile(np.log(np.maximum(model.prior, PROB_FLOOR)), (table.num_items, 1))
    np.add.at(joint, table.items, log_conf[table.annotators, :, table.labels])
    return joint


def ds_e_step(model: DsModel, table: AnnotationTable) -> Array:
    """Posterior over true classes: pi_c * prod_j Pi^j[c, label]."""
    joint = _log_joint(model, table)
    return np.exp(joint - logsumexp(joint, axis=1, keepdims=True))


def ds_m_step(posteriors: Array, table: AnnotationTable, alpha: float = DS_SMOOTHING) -> DsModel:
    """Re-estimate prior and confusions with additive smoothing alpha."""
    num_classes = table.num_classes
    prior = posteriors.sum(axis=0) + alpha
    counts = np.full((table.num_annotators, num_classes, num_classes), alpha)
    np.add.at(counts, (table.annotators, slice(None), table.labels), posteriors[table.items])
    return DsModel(
        prior=prior / prior.sum(),
        confusions=counts / counts.sum(axis=2, keepdims=True),
    )


def ds_log_likelihood(model: DsModel, table: AnnotationTable, alpha: float = DS_SMOOTHING) -> float:
    """Marginal log-likelihood plus the Dirichlet smoothing terms."""
    marginal = float(logsumexp(_log_joint(model, table), axis=1).sum())
    smoothing = alpha * (
        np.log(np.maximum(model.prior, PROB_FLOOR)).sum()
        + np.log(np.maximum(model.confusions, PROB_FLOOR)).sum()
    )
    return marginal + float(smoothing)


def complete_log_likelihood(
    model: DsModel, table: AnnotationTable, assignment: IntArray, alpha: float = DS_SMOOTHING
) -> float:
    """Smoothed log-likelihood of one full true-label assignment."""
    joint = _log_joint(model, table)
    smoothing = alpha * (
        np.log(np.maximum(model.prior, PROB_FLOOR)).sum()
        + np.log(np.maximum(model.confusions, PROB_FLOOR)).sum()
    )
    return float(joint[np.arange(table.num_items), assignment].sum() + smoothing)


@dataclass(frozen=True)
class DsResult:
    """Fitted model, aggregated labels and the objective after every iteration."""

    model: DsModel
    labels: AggregatedLabels
    log_likelihoods: tuple[float, ...]
    iterations: int


def dawid_skene_em(
    table: AnnotationTable,
    max_iters: int = DS_MAX_ITERS,
    tol: float = DS_TOLERANCE,
    alpha: float = DS_SMOOTHING,
) -> DsResult:
    """EM from majority-vote one-hots until the parameters stop moving."""
    if max_iters < 1 or tol <= 0 or alpha < 0:
        raise ConfigError("DS-EM needs max_iters >= 1, tol > 0 and alpha >= 0")
    votes = aggregate_majority(table).labels
    posteriors = np.eye(table.num_classes)[votes]
    model = ds_m_step(posteriors, table, alpha)
    history = [ds_log_likelihood(model, table, alpha)]
    iterations = 0
    for iterations in range(1, max_iters + 1):
        updated = ds_m_step(ds_e_step(model, table), table, alpha)
        history.append(ds_log_likelihood(updated, table, alpha))
        change = updated.max_change(model)
        model = updated
        if change < tol:
            break
    posteriors = ds_e_step(model, table)
    logger.info(
        "Dawid-Skene EM finished",
        iterations=iterations,
        log_likelihood=history[-1],
        items=table.num_items,
    )
    labels = AggregatedLabels(
        instance_ids=table.instance_ids,
        labels=np.argmax(posteriors, axis=1).astype(np.int64),
        method=Method.DS,
        posteriors=posteriors,
    )
    return DsResult(model=model, labels=labels, log_likelihoods=tuple(history), iterations=iterations)
