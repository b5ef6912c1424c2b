"""Final classifier: forward-corrected training, plain training and evaluation."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import numpy.typing as npt
import structlog

from src.domain.crowdsim import AnnotatorPool, CleanDataset, CrowdDataset
from src.domain.crowdtrain.loss import batch_forward_corrected_loss
from src.domain.exceptions import ConfigError, DataError
from src.domain.tensornet import (
    MlpNetwork,
    OptimizerSpec,
    TrainingHistory,
    backward,
    forward,
    predict,
    rng_stream,
    run_sgd,
    train_softmax_classifier,
)
from src.domain.transition import TransitionNetwork, TransitionSource
from src.domain.value_objects import Activation, Split

Array = npt.NDArray[np.float64]
IntArray = npt.NDArray[np.int64]

REVISION_SCALE = 0.1

logger = structlog.get_logger(__name__)


@dataclass(frozen=True)
class ClassifierNetwork:
    """Softmax MLP f(x; phi) estimating the Bayes class posterior."""

    net: MlpNetwork

    @classmethod
    def initialize(
        cls, dim: int, num_classes: int, hidden: Sequence[int], seed: int
    ) -> ClassifierNetwork:
        """Fresh network from the (seed, "classifier-init") stream."""
        return cls(
            MlpNetwork.initialize(
                [dim, *hidden, num_classes],
                rng_stream(seed, "classifier-init"),
                final_activation=Activation.SOFTMAX_ROWS,
            )
        )

    @property
    def num_classes(self) -> int:
        return self.net.output_dim

    def predict_proba(self, features: Array) -> Array:
        """(b, C) class posteriors."""
        return predict(self.net, features)

    def predict(self, features: Array) -> IntArray:
        """Argmax class per row."""
        return np.argmax(self.predict_proba(features), axis=1).astype(np.int64)


@dataclass(frozen=True)
class ClassifierFit:
    """Trained classifier, the (possibly revised) transition source and the loss curve."""

    classifier: ClassifierNetwork
    source: TransitionSource
    history: TrainingHistory


@dataclass(frozen=True)
class CorrectionPairs:
    """Every training annotation as (features, latent, annotator, noisy label)."""

    features: Array
    latent: Array
    annotators: IntArray
    labels: IntArray

    @classmethod
    def from_crowd(cls, crowd: CrowdDataset, global_net: TransitionNetwork) -> CorrectionPairs:
        """Training-split annotations with latents from the frozen backbone."""
        mask = crowd.mask(Split.TRAIN)
        features = crowd.base.features[crowd.instance_ids[mask]]
        return cls(
            features=features,
            latent=global_net.latent(features),
            annotators=crowd.annotator_ids[mask],
            labels=crowd.labels[mask],
        )

    @property
    def count(self) -> int:
        return int(self.labels.shape[0])


def corrected_loss(
    classifier: ClassifierNetwork,
    source: TransitionSource,
    pairs: CorrectionPairs,
    include_source: bool = False,
) -> tuple[float, list[Array]]:
    """Mean forward-corrected loss with classifier (and optionally source) gradients."""
    probs, cache = forward(classifier.net, pairs.features)
    matrices = source.matrices(pairs.latent, pairs.annotators)
    loss, grad_probs, grad_matrices = batch_forward_corrected_loss(probs, matrices, pairs.labels)
    grads = backward(classifier.net, cache, grad_probs)
    if include_source:
        grads.extend(source.backward(pairs.latent, pairs.annotators, grad_matrices))
    return loss, grads


def _check_heads(source: TransitionSource, crowd: CrowdDataset) -> None:
    available = getattr(source, "num_annotators", None)
    if available is not None and available < crowd.num_annotators:
        raise ConfigError(
            f"transition heads cover {available} annotators, crowd has {crowd.num_annotators}"
        )
    if source.num_classes != crowd.num_classes:
        raise ConfigError("transition heads and crowd disagree on the class count")


def train_classifier(
    crowd: CrowdDataset,
    source: TransitionSource,
    global_net: TransitionNetwork,
    epochs: int,
    spec: OptimizerSpec,
    seed: int,
    hidden: Sequence[int] = (32, 32),
    joint_revision: bool = False,
) -> ClassifierFit:
    """Minimize the forward-corrected loss over every training annotation.

    With joint revision the source parameters train alongside at a tenth of
    the classifier learning rate; otherwise they stay fixed.
    """
    _check_heads(source, crowd)
    pairs = CorrectionPairs.from_crowd(crowd, global_net)
    if pairs.count == 0:
        raise ConfigError("no training annotations for the classifier")
    classifier = ClassifierNetwork.initialize(crowd.base.dim, crowd.num_classes, hidden, seed)
    split = len(classifier.net.parameters())
    fixed = None if joint_revision else source.matrices(pairs.latent, pairs.annotators)

    def batch_loss(params: list[Array], batch: IntArray) -> tuple[float, list[Array]]:
        model = classifier.net.with_parameters(params[:split])
        probs, cache = forward(model, pairs.features[batch])
        if fixed is None:
            current = source.with_parameters(params[split:])
            matrices = current.matrices(pairs.latent[batch], pairs.annotators[batch])
        else:
            matrices = fixed[batch]
        loss, grad_probs, grad_matrices = batch_forward_corrected_loss(
            probs, matrices, pairs.labels[batch]
        )
        grads = backward(model, cache, grad_probs)
        if fixed is None:
            grads.extend(
                current.backward(pairs.latent[batch], pairs.annotators[batch], grad_matrices)
            )
        return loss, grads

    params = list(classifier.net.parameters())
    scales = [1.0] * split
    if joint_revision:
        params.extend(source.parameters())
        scales.extend([REVISION_SCALE] * (len(params) - split))
    logger.info(
        "Training corrected classifier",
        pairs=pairs.count,
        epochs=epochs,
        joint_revision=joint_revision,
    )
    trained, history = run_sgd(
        params, pairs.count, epochs, spec,
        rng_stream(seed, "classifier-batches"), batch_loss, "classifier", scales,
    )
    revised = source.with_parameters(trained[split:]) if joint_revision else source
    return ClassifierFit(
        classifier=ClassifierNetwork(classifier.net.with_parameters(trained[:split])),
        source=revised,
        history=history,
    )


def train_plain(
    features: Array,
    labels: IntArray,
    num_classes: int,
    epochs: int,
    spec: OptimizerSpec,
    seed: int,
    hidden: Sequence[int] = (32, 32),
) -> tuple[ClassifierNetwork, TrainingHistory]:
    """Uncorrected cross-entropy training on (features, labels)."""
    if labels.shape[0] == 0:
        raise ConfigError("no labels to train on")
    classifier = ClassifierNetwork.initialize(features.shape[1], num_classes, hidden, seed)
    net, history = train_softmax_classifier(
        classifier.net, features, labels, epochs, spec,
        rng_stream(seed, "classifier-batches"), "classifier",
    )
    return ClassifierNetwork(net), history


def evaluate(classifier: ClassifierNetwork, clean: CleanDataset, split: Split = Split.TEST) -> float:
    """Accuracy against the true labels of one split; withheld labels are skipped."""
    indices = clean.indices(split)
    if indices.size == 0:
        raise DataError(f"{split.value} split is empty")
    indices = indices[clean.known()[indices]]
    if indices.size == 0:
        raise DataError(f"every {split.value} label is withheld")
    predictions = classifier.predict(clean.features[indices])
    return float(np.mean(predictions == clean.true_labels[indices]))


def noisy_agreement(
    classifier: ClassifierNetwork, crowd: CrowdDataset, split: Split = Split.VAL
) -> Optional[float]:
    """Share of a split's annotations that match the classifier's argmax."""
    mask = crowd.mask(split)
    if not np.any(mask):
        return None
    predictions = classifier.predict(crowd.base.features[crowd.instance_ids[mask]])
    return float(np.mean(predictions == crowd.labels[mask]))


def evaluation_pairs(
    clean: CleanDataset, num_annotators: int, count: int, seed: int
) -> tuple[IntArray, IntArray]:
    """Sampled (test instance, annotator) pairs for transition error."""
    indices = clean.indices(Split.TEST)
    if indices.size == 0 or count < 1:
        raise DataError("evaluation pairs need test instances and a positive count")
    rng = rng_stream(seed, "evaluation-pairs")
    return (
        rng.choice(indices, size=count).astype(np.int64),
        rng.integers(0, num_annotators, size=count).astype(np.int64),
    )


def transition_error(estimated: Array, truth: Array) -> float:
    """Mean over matrices of (1/C) * sum of per-row L1 distances."""
    if estimated.shape != truth.shape or estimated.ndim != 3:
        raise DataError(f"estimated {estimated.shape} vs ground truth {truth.shape}")
    if estimated.shape[0] == 0:
        raise DataError("no matrices to compare")
    per_row = np.abs(estimated - truth).sum(axis=2)
    return float(per_row.mean())


def source_transition_error(
    source: TransitionSource,
    global_net: TransitionNetwork,
    pool: AnnotatorPool,
    features: Array,
    annotators: IntArray,
) -> float:
    """transition_error of a source against the pool's ground-truth matrices."""
    estimated = source.matrices(global_net.latent(features), annotators)
    return transition_error(estimated, pool.transition_matrices(features, annotators))
