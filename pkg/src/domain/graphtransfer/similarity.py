"""Annotator similarity graph: cosine similarity, KNN, Graph-SVD, normalization."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import numpy.typing as npt
import scipy.linalg
import structlog

from src.domain.exceptions import ConfigError, ContractError, NumericalError, ShapeError
from src.domain.value_objects import SimilarityNorm

Array = npt.NDArray[np.float64]
IntArray = npt.NDArray[np.int64]

BINARIZE_THRESHOLD = 0.5

logger = structlog.get_logger(__name__)


@dataclass(frozen=True)
class SimilarityGraph:
    """S, its KNN adjacency A, denoised A* and row-normalized A-hat."""

    S: Array
    A: Array
    A_star: Array
    A_hat: Array
    k: int
    rank: int

    @property
    def num_annotators(self) -> int:
        """R."""
        return int(self.S.shape[0])


def similarity(vectors: Array, norm: SimilarityNorm = SimilarityNorm.L2) -> Array:
    """S_ij = (theta_i . theta_j) / (|theta_i| |theta_j|) under the chosen norm."""
    if vectors.ndim != 2:
        raise ShapeError(f"head vectors must be (R, D), got {vectors.shape}")
    order = 1 if norm is SimilarityNorm.L1 else 2
    norms = np.linalg.norm(vectors, ord=order, axis=1)
    if np.any(norms == 0.0):
        raise NumericalError(f"cannot normalize zero-norm head(s) {np.flatnonzero(norms == 0).tolist()}")
    unit = vectors / norms[:, None]
    scores = unit @ unit.T
    return (scores + scores.T) / 2.0


def knn_adjacency(S: Array, k: int) -> Array:
    """Ones at each row's k most similar nodes, self first, ties to the lower index."""
    count = S.shape[0]
    if S.shape != (count, count):
        raise ShapeError(f"similarity must be square, got {S.shape}")
    if not 1 <= k <= count:
        raise ConfigError(f"neighbor count k={k} must lie in [1, {count}]")
    ranked = S.copy()
    np.fill_diagonal(ranked, np.inf)
    neighbors = np.argsort(-ranked, axis=1, kind="stable")[:, :k]
    adjacency = np.zeros_like(S)
    np.put_along_axis(adjacency, neighbors, 1.0, axis=1)
    return adjacency


def graph_svd_denoise(A: Array, rank: int) -> Array:
    """Binarized rank-r SVD reconstruction of A with forced self-loops."""
    count = A.shape[0]
    if not 1 <= rank <= count:
        raise ConfigError(f"SVD rank {rank} must lie in [1, {count}]")
    try:
        U, s, Vt = scipy.linalg.svd(A)
    except (np.linalg.LinAlgError, ValueError) as error:
        finite = bool(np.all(np.isfinite(A)))
        frobenius = float(np.linalg.norm(A)) if finite else float("nan")
        raise NumericalError(
            f"SVD did not converge ({error}); matrix {A.shape}, finite={finite}, "
            f"frobenius={frobenius:.6g}"
        ) from error
    reconstruction = (U[:, :rank] * s[:rank]) @ Vt[:rank]
    denoised = (reconstruction > BINARIZE_THRESHOLD).astype(np.float64)
    np.fill_diagonal(denoised, 1.0)
    return denoised


def normalize(A_star: Array) -> Array:
    """Divide every row by its degree."""
    degrees = A_star.sum(axis=1)
    if np.any(degrees <= 0):
        raise ContractError("every node needs at least one neighbor before normalization")
    return A_star / degrees[:, None]


def build_graph(
    vectors: Array,
    k: int,
    rank: int,
    norm: SimilarityNorm = SimilarityNorm.L2,
) -> SimilarityGraph:
    """similarity -> knn_adjacency -> graph_svd_denoise -> normalize."""
    S = similarity(vectors, norm)
    A = knn_adjacency(S, k)
    A_star = graph_svd_denoise(A, rank)
    graph = SimilarityGraph(S=S, A=A, A_star=A_star, A_hat=normalize(A_star), k=k, rank=rank)
    logger.info(
        "Built annotator graph",
        annotators=graph.num_annotators,
        k=k,
        rank=rank,
        edges=int(A.sum()),
        denoised_edges=int(A_star.sum()),
    )
    return graph


def graph_recovery(A_star: Array, groups: IntArray) -> float:
    """Fraction of off-diagonal edges joining annotators of the same group."""
    edges = A_star.astype(bool)
    np.fill_diagonal(edges, False)
    total = int(edges.sum())
    if total == 0:
        return 1.0
    same = groups[:, None] == groups[None, :]
    return float((edges & same).sum() / total)
