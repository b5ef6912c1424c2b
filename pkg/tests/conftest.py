"""Test configuration and fixtures."""
from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from src.domain.crowdsim import CrowdDataset, generate_crowd
from src.domain.tensornet import OptimizerSpec
from src.infrastructure.config import ExperimentConfig, parse_config
from tests.factories import TINY_CONFIG


@pytest.fixture
def tiny_config() -> ExperimentConfig:
    """Small config that runs every stage in well under a second."""
    return parse_config(TINY_CONFIG)


@pytest.fixture
def tiny_crowd() -> CrowdDataset:
    """Crowd matching the tiny config."""
    return generate_crowd(
        n=200,
        dim=4,
        num_classes=3,
        class_sep=5.0,
        num_annotators=6,
        num_groups=2,
        rho=0.3,
        rho_max=0.5,
        mean_annotations=2.0,
        seed=7,
    )


@pytest.fixture
def fast_spec() -> OptimizerSpec:
    """Optimizer for short training runs."""
    return OptimizerSpec(learning_rate=0.05, momentum=0.9, batch_size=32)


@pytest.fixture
def rng() -> np.random.Generator:
    """Seeded generator for fixture data."""
    return np.random.default_rng(12345)


@pytest.fixture
def out_dir(tmp_path: Path) -> Path:
    """Output root inside the test's temporary directory."""
    path = tmp_path / "out"
    path.mkdir()
    return path
