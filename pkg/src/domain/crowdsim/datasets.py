"""Clean synthetic classification data."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

from src.domain.exceptions import ConfigError, DataError
from src.domain.tensornet import rng_stream
from src.domain.value_objects import Split

Array = npt.NDArray[np.float64]
IntArray = npt.NDArray[np.int64]

DEFAULT_SPLIT = (0.8, 0.1, 0.1)
WITHHELD_LABEL = -1


@dataclass(frozen=True)
class CleanDataset:
    """Feature vectors with hidden true labels and split tags."""

    features: Array
    true_labels: IntArray
    splits: tuple[Split, ...]
    num_classes: int

    def __post_init__(self) -> None:
        """Validate labels and split tags."""
        n = self.features.shape[0]
        if self.features.ndim != 2:
            raise DataError("features must be a 2-D array")
        if self.true_labels.shape != (n,) or len(self.splits) != n:
            raise DataError("features, labels and splits disagree on instance count")
        known = self.true_labels[self.true_labels != WITHHELD_LABEL]
        if known.size and (known.min() < 0 or known.max() >= self.num_classes):
            raise DataError(f"labels must lie in [0, {self.num_classes})")

    @property
    def size(self) -> int:
        """Instance count n."""
        return int(self.features.shape[0])

    @property
    def dim(self) -> int:
        """Feature dimension d."""
        return int(self.features.shape[1])

    def known(self) -> npt.NDArray[np.bool_]:
        """Instances whose true label was not withheld."""
        return self.true_labels != WITHHELD_LABEL

    def indices(self, *splits: Split) -> IntArray:
        """Sorted instance ids belonging to any of the given splits."""
        wanted = set(splits)
        return np.array(
            [i for i, split in enumerate(self.splits) if split in wanted], dtype=np.int64
        )


def _split_tags(n: int, fractions: tuple[float, float, float], rng: np.random.Generator) -> tuple[Split, ...]:
    if len(fractions) != 3 or any(f < 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise ConfigError("split fractions must be three non-negative numbers summing to 1")
    n_train = int(round(fractions[0] * n))
    n_val = min(int(round(fractions[1] * n)), n - n_train)
    tags = [Split.TEST] * n
    order = rng.permutation(n)
    for position, index in enumerate(order):
        if position < n_train:
            tags[index] = Split.TRAIN
        elif position < n_train + n_val:
            tags[index] = Split.VAL
    return tuple(tags)


def make_blobs(
    n: int,
    d: int,
    num_classes: int,
    class_sep: float,
    seed: int,
    split_fractions: tuple[float, float, float] = DEFAULT_SPLIT,
) -> CleanDataset:
    """Balanced unit-covariance Gaussian clusters, centers at least `class_sep` apart."""
    if num_classes < 2:
        raise ConfigError("need at least two classes")
    if n < num_classes:
        raise ConfigError(f"n={n} is smaller than the class count {num_classes}")
    if d < 2:
        raise ConfigError("feature dimension must be at least 2")
    if class_sep <= 0:
        raise ConfigError("class_sep must be positive")

    rng = rng_stream(seed, "blobs")
    centers = rng.standard_normal((num_classes, d))
    gaps = np.linalg.norm(centers[:, None, :] - centers[None, :, :], axis=-1)
    min_gap = float(np.min(gaps[~np.eye(num_classes, dtype=bool)]))
    centers *= class_sep / min_gap

    labels = rng.permutation(np.arange(n, dtype=np.int64) % num_classes)
    features = centers[labels] + rng.standard_normal((n, d))
    splits = _split_tags(n, split_fractions, rng_stream(seed, "splits"))
    return CleanDataset(
        features=features,
        true_labels=labels.astype(np.int64),
        splits=splits,
        num_classes=num_classes,
    )
