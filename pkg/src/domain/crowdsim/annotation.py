"""Sparse annotator assignment and label corruption."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import numpy.typing as npt

from src.domain.crowdsim.datasets import CleanDataset, make_blobs
from src.domain.crowdsim.noise import AnnotatorPool, build_pool, flip_distributions
from src.domain.exceptions import ConfigError, DataError
from src.domain.tensornet import rng_stream
from src.domain.value_objects import FlipRateScope, Split

Array = npt.NDArray[np.float64]
IntArray = npt.NDArray[np.int64]


@dataclass(frozen=True)
class Assignment:
    """Deduplicated (instance, annotator) slots sorted by instance then annotator."""

    instance_ids: IntArray
    annotator_ids: IntArray
    num_instances: int

    def sets(self) -> list[IntArray]:
        """w_1..w_n as arrays of annotator ids."""
        bounds = np.searchsorted(self.instance_ids, np.arange(self.num_instances + 1))
        return [self.annotator_ids[bounds[i] : bounds[i + 1]] for i in range(self.num_instances)]


def assign_annotators(n: int, num_annotators: int, mean_annotations: float, seed: int) -> Assignment:
    """One random annotator per instance, then floor((r-1) n / R) extra instances per annotator."""
    if mean_annotations < 1:
        raise ConfigError("average annotations per instance must be at least 1")
    if mean_annotations > num_annotators:
        raise ConfigError(
            f"average annotations {mean_annotations} exceeds the annotator count {num_annotators}"
        )
    if n < 1:
        raise ConfigError("cannot assign annotators to an empty instance set")
    rng = rng_stream(seed, "assignment")
    first_instances = np.arange(n, dtype=np.int64)
    first_annotators = rng.integers(num_annotators, size=n)

    extra = int(np.floor((mean_annotations - 1.0) * n / num_annotators))
    extra_instances = [rng.choice(n, size=extra, replace=False) for _ in range(num_annotators)]
    more_instances = np.concatenate(extra_instances) if extra else np.empty(0, dtype=np.int64)
    more_annotators = np.repeat(np.arange(num_annotators, dtype=np.int64), extra)

    keys = np.concatenate([first_instances, more_instances]) * num_annotators + np.concatenate(
        [first_annotators, more_annotators]
    )
    keys = np.unique(keys)
    return Assignment(
        instance_ids=(keys // num_annotators).astype(np.int64),
        annotator_ids=(keys % num_annotators).astype(np.int64),
        num_instances=n,
    )


@dataclass(frozen=True)
class CrowdDataset:
    """Clean data plus a flat (instance, annotator, noisy label) list."""

    base: CleanDataset
    instance_ids: IntArray
    annotator_ids: IntArray
    labels: IntArray
    num_annotators: int
    pool: Optional[AnnotatorPool] = None
    flip_distributions: Optional[Array] = None

    def __post_init__(self) -> None:
        """Validate annotation triples."""
        count = self.instance_ids.shape[0]
        if self.annotator_ids.shape != (count,) or self.labels.shape != (count,):
            raise DataError("annotation columns have different lengths")
        if count == 0:
            return
        if self.instance_ids.min() < 0 or self.instance_ids.max() >= self.base.size:
            raise DataError("annotation references an unknown instance")
        if self.annotator_ids.min() < 0 or self.annotator_ids.max() >= self.num_annotators:
            raise DataError("annotation references an unknown annotator")
        if self.labels.min() < 0 or self.labels.max() >= self.num_classes:
            raise DataError(f"noisy labels must lie in [0, {self.num_classes})")

    @property
    def num_classes(self) -> int:
        """C."""
        return self.base.num_classes

    @property
    def num_annotations(self) -> int:
        """Total annotation count."""
        return int(self.instance_ids.shape[0])

    def mask(self, *splits: Split) -> npt.NDArray[np.bool_]:
        """Annotations whose instance belongs to any of the splits."""
        wanted = np.zeros(self.base.size, dtype=bool)
        wanted[self.base.indices(*splits)] = True
        return wanted[self.instance_ids]

    def annotation_sets(self) -> dict[int, IntArray]:
        """Instance id -> positions of its annotations in the flat list."""
        order = np.argsort(self.instance_ids, kind="stable")
        ids = self.instance_ids[order]
        unique, starts = np.unique(ids, return_index=True)
        ends = np.append(starts[1:], ids.shape[0])
        return {int(i): order[s:e] for i, s, e in zip(unique, starts, ends)}

    def mean_annotations(self) -> float:
        """r-bar over annotated instances."""
        annotated = np.unique(self.instance_ids).shape[0]
        return self.num_annotations / annotated if annotated else 0.0

    def annotator_counts(self) -> IntArray:
        """Labels provided by each annotator."""
        return np.bincount(self.annotator_ids, minlength=self.num_annotators).astype(np.int64)

    def empirical_flip_rates(self) -> Array:
        """Per-annotator fraction of labels that differ from the true label.

        Items with a withheld true label are left out; NaN for annotators with none left.
        """
        keep = self.base.known()[self.instance_ids]
        annotators = self.annotator_ids[keep]
        truth = self.base.true_labels[self.instance_ids[keep]]
        flips = np.bincount(
            annotators, weights=(self.labels[keep] != truth).astype(np.float64),
            minlength=self.num_annotators,
        )
        counts = np.bincount(annotators, minlength=self.num_annotators)
        rates = np.full(self.num_annotators, np.nan)
        seen = counts > 0
        rates[seen] = flips[seen] / counts[seen]
        return rates


def corrupt(clean: CleanDataset, pool: AnnotatorPool, assignment: Assignment, seed: int) -> CrowdDataset:
    """Draw every assigned noisy label from its annotator's instance flip distribution."""
    instance_ids, annotator_ids = assignment.instance_ids, assignment.annotator_ids
    if annotator_ids.size and (annotator_ids.min() < 0 or annotator_ids.max() >= pool.num_annotators):
        raise DataError("assignment references an unknown annotator")
    if instance_ids.size and (instance_ids.min() < 0 or instance_ids.max() >= clean.size):
        raise DataError("assignment references an unknown instance")
    if any(clean.splits[i] is Split.TEST for i in np.unique(instance_ids)):
        raise DataError("test instances are never annotated")
    if pool.projections.shape[2] != clean.dim or pool.num_classes != clean.num_classes:
        raise ConfigError("annotator pool does not match the dataset's dimension or class count")

    probs = flip_distributions(
        clean.features[instance_ids],
        clean.true_labels[instance_ids],
        pool.projections[pool.group_of[annotator_ids]],
        pool.flip_rates[annotator_ids],
    )
    draws = rng_stream(seed, "corrupt").random(instance_ids.shape[0])
    cumulative = np.cumsum(probs, axis=1)
    labels = np.minimum((cumulative < draws[:, None]).sum(axis=1), clean.num_classes - 1)
    return CrowdDataset(
        base=clean,
        instance_ids=instance_ids,
        annotator_ids=annotator_ids,
        labels=labels.astype(np.int64),
        num_annotators=pool.num_annotators,
        pool=pool,
        flip_distributions=probs,
    )


def generate_crowd(
    n: int,
    dim: int,
    num_classes: int,
    class_sep: float,
    num_annotators: int,
    num_groups: int,
    rho: float,
    rho_max: float,
    mean_annotations: float,
    seed: int,
    scope: FlipRateScope = FlipRateScope.GROUP,
) -> CrowdDataset:
    """Blobs, annotator pool, assignment over train+val, corruption."""
    clean = make_blobs(n, dim, num_classes, class_sep, seed)
    pool = build_pool(num_annotators, num_groups, dim, num_classes, rho, rho_max, seed, scope)
    labelled = clean.indices(Split.TRAIN, Split.VAL)
    local = assign_annotators(labelled.shape[0], num_annotators, mean_annotations, seed)
    assignment = Assignment(
        instance_ids=labelled[local.instance_ids],
        annotator_ids=local.annotator_ids,
        num_instances=clean.size,
    )
    return corrupt(clean, pool, assignment, seed)
