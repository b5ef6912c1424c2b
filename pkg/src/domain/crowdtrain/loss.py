"""Forward loss correction through per-annotator transition matrices."""
from __future__ import annotations

import numpy as np
import numpy.typing as npt

from src.domain.exceptions import ShapeError
from src.domain.tensornet import PROB_FLOOR, cross_entropy
from src.domain.transition import check_row_stochastic

Array = npt.NDArray[np.float64]
IntArray = npt.NDArray[np.int64]


def forward_corrected_loss(
    f_out: Array, transition: Array, noisy_label: int
) -> tuple[float, Array, Array]:
    """Cross-entropy of the noisy label under f_out . T, gradients w.r.t. f_out and T."""
    num_classes = f_out.shape[0]
    if transition.shape != (num_classes, num_classes):
        raise ShapeError(f"transition {transition.shape} for {num_classes} classes")
    check_row_stochastic(transition)
    noisy_posterior = f_out @ transition
    loss, grad_noisy = cross_entropy(np.eye(num_classes)[noisy_label], noisy_posterior)
    return loss, transition @ grad_noisy, np.outer(f_out, grad_noisy)


def batch_forward_corrected_loss(
    probs: Array, transitions: Array, labels: IntArray
) -> tuple[float, Array, Array]:
    """Mean corrected loss over a batch of (probs, T, noisy label) rows."""
    batch, num_classes = probs.shape
    if transitions.shape != (batch, num_classes, num_classes) or labels.shape != (batch,):
        raise ShapeError(
            f"probs {probs.shape}, transitions {transitions.shape}, labels {labels.shape}"
        )
    check_row_stochastic(transitions)
    rows = np.arange(batch)
    noisy = np.einsum("bc,bck->bk", probs, transitions)
    picked = np.maximum(noisy[rows, labels], PROB_FLOOR)
    scale = -1.0 / (picked * batch)
    grad_probs = transitions[rows, :, labels] * scale[:, None]
    grad_transitions = np.zeros_like(transitions)
    grad_transitions[rows, :, labels] = probs * scale[:, None]
    return float(-np.mean(np.log(picked))), grad_probs, grad_transitions
