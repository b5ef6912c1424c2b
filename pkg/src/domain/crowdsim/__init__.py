"""Synthetic crowds with annotator- and instance-dependent label noise."""
from src.domain.crowdsim.annotation import (
    Assignment,
    CrowdDataset,
    assign_annotators,
    corrupt,
    generate_crowd,
)
from src.domain.crowdsim.datasets import WITHHELD_LABEL, CleanDataset, make_blobs
from src.domain.crowdsim.noise import (
    AnnotatorPool,
    build_pool,
    flip_distributions,
    instance_flip_distribution,
    sample_flip_rates,
)

__all__ = [
    "WITHHELD_LABEL",
    "AnnotatorPool",
    "Assignment",
    "CleanDataset",
    "CrowdDataset",
    "assign_annotators",
    "build_pool",
    "corrupt",
    "flip_distributions",
    "generate_crowd",
    "instance_flip_distribution",
    "make_blobs",
    "sample_flip_rates",
]
