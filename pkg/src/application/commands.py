"""Application commands."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from src.infrastructure.config import ExperimentConfig


@dataclass(frozen=True)
class Command:
    """Base command."""

    pass


@dataclass(frozen=True)
class GenerateCommand(Command):
    """Write a synthetic crowd to disk."""

    config: ExperimentConfig
    out_dir: Path


@dataclass(frozen=True)
class RunCommand(Command):
    """Run one pipeline."""

    config: ExperimentConfig
    out_dir: Path
    dry_run: bool = False
    data_dir: Optional[Path] = None


@dataclass(frozen=True)
class AblateCommand(Command):
    """Sweep one parameter across seeds and methods."""

    config: ExperimentConfig
    out_dir: Path
    param: str
    values: tuple[str, ...]
    seeds: tuple[int, ...]
    methods: tuple[str, ...] = ()
    workers: int = 1


@dataclass(frozen=True)
class ReportCommand(Command):
    """Aggregate finished run directories."""

    run_dirs: tuple[Path, ...]
    out_dir: Path
