"""Softmax and cross-entropy with their gradients."""
from __future__ import annotations

import numpy as np
import numpy.typing as npt

from src.domain.exceptions import ContractError, ShapeError

Array = npt.NDArray[np.float64]

PROB_FLOOR = 1e-12


def softmax_rows(logits: Array) -> Array:
    """Softmax over the last axis, stabilized by subtracting the row max."""
    shifted = logits - np.max(logits, axis=-1, keepdims=True)
    exps = np.exp(shifted)
    return exps / np.sum(exps, axis=-1, keepdims=True)


def softmax_rows_backward(probs: Array, grad_probs: Array) -> Array:
    """Pull a gradient w.r.t. softmax outputs back to the logits."""
    inner = np.sum(grad_probs * probs, axis=-1, keepdims=True)
    return probs * (grad_probs - inner)


def cross_entropy(target_onehot: Array, probs: Array) -> tuple[float, Array]:
    """Return -log probs[k] for the target class k and its gradient w.r.t. probs."""
    target = np.asarray(target_onehot, dtype=np.float64)
    probs = np.asarray(probs, dtype=np.float64)
    if target.shape != probs.shape or target.ndim != 1:
        raise ShapeError(f"target {target.shape} vs probs {probs.shape}")
    is_binary = np.all((target == 0.0) | (target == 1.0))
    if not is_binary or target.sum() != 1.0:
        raise ContractError("cross-entropy target must be one-hot")
    k = int(np.argmax(target))
    p_k = max(float(probs[k]), PROB_FLOOR)
    grad = np.zeros_like(probs)
    grad[k] = -1.0 / p_k
    return -float(np.log(p_k)), grad


def batch_cross_entropy(labels: npt.NDArray[np.int64], probs: Array) -> tuple[float, Array]:
    """Mean cross-entropy over a batch of integer labels, gradient w.r.t. probs."""
    if probs.ndim != 2 or labels.shape != (probs.shape[0],):
        raise ShapeError(f"labels {labels.shape} vs probs {probs.shape}")
    rows = np.arange(labels.shape[0])
    picked = np.maximum(probs[rows, labels], PROB_FLOOR)
    batch = labels.shape[0]
    grad = np.zeros_like(probs)
    grad[rows, labels] = -1.0 / (picked * batch)
    return float(-np.mean(np.log(picked))), grad
