"""Experiment configuration."""
from src.infrastructure.config.experiment import (
    ExperimentConfig,
    dump_config,
    load_config,
    parse_config,
)

__all__ = ["ExperimentConfig", "dump_config", "load_config", "parse_config"]
