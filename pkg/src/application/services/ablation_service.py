"""Ablation service: seeded sweeps over one parameter, methods and seeds."""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional

import numpy as np
import structlog

from src.application.commands import AblateCommand, RunCommand
from src.application.dto import SweepRow
from src.application.services.pipeline_service import PipelineService
from src.domain.exceptions import ConfigError
from src.domain.tensornet import rng_stream
from src.infrastructure.config import ExperimentConfig
from src.infrastructure.persistence.report_io import write_rows

logger = structlog.get_logger(__name__)

SWEEP_FILE = "sweep.csv"
SUMMARY_FILE = "sweep_summary.csv"
MAX_CELL_SEED = 2**31 - 1

# swept name -> dotted config path
SWEEP_PARAMS: dict[str, str] = {
    "mean_annotations": "noise.mean_annotations",
    "r_bar": "noise.mean_annotations",
    "num_groups": "noise.num_groups",
    "G": "noise.num_groups",
    "k": "graph.k",
    "rho": "noise.rho",
    "method": "method",
}

SWEEP_HEADER = [
    "param", "value", "method", "replicate", "seed", "config_hash",
    "test_accuracy", "transition_error", "noisy_agreement", "wall_time",
]
SUMMARY_HEADER = [
    "param", "value", "method", "runs",
    "accuracy_mean", "accuracy_std", "transition_error_mean", "transition_error_std", "wall_time_mean",
]


@dataclass(frozen=True)
class SweepCell:
    """One (value, method, replicate) combination; config.seed is the derived cell seed."""

    param: str
    value: str
    replicate: int
    config: ExperimentConfig


def _dedupe(values: tuple[str, ...]) -> list[str]:
    return list(dict.fromkeys(values))


def cell_seed(replicate: int, index: int) -> int:
    """Seed of the cell at `index` in plan order, drawn from its own stream."""
    return int(rng_stream(replicate, "sweep-cell", index).integers(0, MAX_CELL_SEED))


def plan_cells(command: AblateCommand) -> list[SweepCell]:
    """Cross product of values x methods x replicate seeds.

    Each cell runs under a seed derived from (replicate seed, cell index), so
    no two cells share data, initialization or minibatch streams.
    """
    if command.param not in SWEEP_PARAMS:
        raise ConfigError(
            f"cannot sweep '{command.param}'; choose one of {', '.join(sorted(SWEEP_PARAMS))}"
        )
    if not command.seeds:
        raise ConfigError("seed list is empty")
    if not command.values:
        raise ConfigError("value list is empty")
    path = SWEEP_PARAMS[command.param]
    methods: list[Optional[str]] = (
        [None] if path == "method" or not command.methods else list(_dedupe(command.methods))
    )
    cells = []
    for value in _dedupe(command.values):
        for method in methods:
            for replicate in dict.fromkeys(command.seeds):
                overrides: dict[str, Any] = {path: value, "seed": cell_seed(replicate, len(cells))}
                if method is not None:
                    overrides["method"] = method
                cells.append(
                    SweepCell(command.param, value, replicate, command.config.with_overrides(**overrides))
                )
    return cells


def run_cell(cell: SweepCell, out_dir: Path) -> SweepRow:
    """Run one cell's pipeline; module-level so worker processes can import it."""
    result = PipelineService().run_pipeline(RunCommand(config=cell.config, out_dir=out_dir))
    metrics = result.metrics
    assert metrics is not None
    return SweepRow(
        param=cell.param,
        value=cell.value,
        method=metrics.method,
        replicate=cell.replicate,
        seed=metrics.seed,
        config_hash=metrics.config_hash,
        test_accuracy=metrics.test_accuracy,
        transition_error=metrics.transition_error,
        noisy_agreement=metrics.noisy_agreement,
        wall_time=sum(result.timings.values()),
    )


def _mean_std(values: list[float]) -> tuple[Optional[float], Optional[float]]:
    if not values:
        return None, None
    array = np.array(values, dtype=np.float64)
    std = float(array.std(ddof=1)) if array.size > 1 else 0.0
    return float(array.mean()), std


def summarize(rows: list[SweepRow]) -> list[dict[str, Any]]:
    """Mean and standard deviation per (value, method), first-seen order."""
    groups: dict[tuple[str, str], list[SweepRow]] = {}
    for row in rows:
        groups.setdefault((row.value, row.method), []).append(row)
    summary = []
    for (value, method), members in groups.items():
        accuracy_mean, accuracy_std = _mean_std([r.test_accuracy for r in members])
        error_mean, error_std = _mean_std(
            [r.transition_error for r in members if r.transition_error is not None]
        )
        summary.append(
            {
                "param": members[0].param,
                "value": value,
                "method": method,
                "runs": len(members),
                "accuracy_mean": accuracy_mean,
                "accuracy_std": accuracy_std,
                "transition_error_mean": error_mean,
                "transition_error_std": error_std,
                "wall_time_mean": _mean_std([r.wall_time for r in members])[0],
            }
        )
    return summary


class AblationService:
    """Runs sweep cells in a worker pool and writes the sweep tables."""

    def run_ablation(self, command: AblateCommand) -> list[SweepRow]:
        """Every cell once; rows come back in plan order."""
        cells = plan_cells(command)
        logger.info(
            "Ablation started",
            param=command.param,
            cells=len(cells),
            workers=command.workers,
        )
        if command.workers > 1:
            with ProcessPoolExecutor(max_workers=command.workers) as pool:
                rows = list(pool.map(run_cell, cells, [command.out_dir] * len(cells)))
        else:
            rows = [run_cell(cell, command.out_dir) for cell in cells]

        sweep_dir = command.out_dir / f"sweep-{command.param}-{command.config.config_hash}"
        write_rows(sweep_dir / SWEEP_FILE, SWEEP_HEADER, (row.to_dict() for row in rows))
        write_rows(sweep_dir / SUMMARY_FILE, SUMMARY_HEADER, summarize(rows))
        logger.info("Ablation finished", directory=str(sweep_dir), rows=len(rows))
        return rows
