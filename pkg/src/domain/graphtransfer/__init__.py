"""Annotator similarity graph and GCN transfer of transition heads."""
from src.domain.graphtransfer.gcn import (
    GcnCache,
    GcnMapper,
    GcnTransition,
    InterdependentHeads,
    assemble_heads,
    gcn_backward,
    gcn_forward,
    gcn_loss,
    gcn_objective,
    train_gcn,
)
from src.domain.graphtransfer.similarity import (
    SimilarityGraph,
    build_graph,
    graph_recovery,
    graph_svd_denoise,
    knn_adjacency,
    normalize,
    similarity,
)
from src.domain.graphtransfer.theory import (
    ContractionReport,
    OrthogonalityReport,
    PairBound,
    contraction_check,
    group_equality_check,
    orthogonality_check,
    uniform_degree,
)

__all__ = [
    "ContractionReport",
    "GcnCache",
    "GcnMapper",
    "GcnTransition",
    "InterdependentHeads",
    "OrthogonalityReport",
    "PairBound",
    "SimilarityGraph",
    "assemble_heads",
    "build_graph",
    "contraction_check",
    "gcn_backward",
    "gcn_forward",
    "gcn_loss",
    "gcn_objective",
    "graph_recovery",
    "graph_svd_denoise",
    "group_equality_check",
    "knn_adjacency",
    "normalize",
    "orthogonality_check",
    "similarity",
    "train_gcn",
    "uniform_degree",
]
