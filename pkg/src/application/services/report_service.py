"""Report service: aggregate verified run directories and check method orderings."""
from __future__ import annotations

from dataclasses import asdict
from pathlib import Path
from typing import Optional

import numpy as np
import structlog

from src.application.commands import ReportCommand
from src.application.dto import AcceptanceCheck, MetricsReport
from src.domain.exceptions import DataError
from src.domain.value_objects import Method
from src.infrastructure.persistence.report_io import (
    METRICS_FILE,
    read_json,
    verify_manifest,
    write_json,
    write_rows,
)

logger = structlog.get_logger(__name__)

REPORT_FILE = "report.csv"
ACCEPTANCE_FILE = "acceptance.json"
MIN_GLOBAL_GAP = 0.02

REPORT_HEADER = [
    "run", "method", "seed", "config_hash", "mean_annotations", "num_groups", "k", "rho",
    "test_accuracy", "transition_error", "noisy_agreement", "m", "graph_recovery",
]


def load_metrics(run_dir: Path) -> MetricsReport:
    """Metrics of a run whose manifest and hashes agree."""
    verify_manifest(run_dir)
    try:
        return MetricsReport.from_dict(read_json(run_dir / METRICS_FILE))
    except TypeError as error:
        raise DataError(f"{run_dir.name}: unexpected metrics fields ({error})") from error


def _mean(values: list[float]) -> Optional[float]:
    return float(np.mean(values)) if values else None


def _by_method(runs: list[MetricsReport], attribute: str) -> dict[str, Optional[float]]:
    grouped: dict[str, list[float]] = {}
    for run in runs:
        value = getattr(run, attribute)
        if value is not None:
            grouped.setdefault(run.method, []).append(float(value))
    return {method: _mean(values) for method, values in grouped.items()}


def ordering_check(runs: list[MetricsReport]) -> AcceptanceCheck:
    """Graph transfer at least matches fine-tuning and beats the global head by the margin."""
    means = _by_method(runs, "test_accuracy")
    full, finetuned, global_only = (
        means.get(Method.TAIDTM.value), means.get(Method.TAIDTM_FT.value), means.get(Method.GLOBAL_ONLY.value)
    )
    if full is None or finetuned is None or global_only is None:
        return AcceptanceCheck("method_ordering", None, "needs taidtm, taidtm_ft and global_only runs")
    passed = full >= finetuned and full - global_only >= MIN_GLOBAL_GAP
    return AcceptanceCheck(
        "method_ordering",
        passed,
        f"taidtm={full:.4f} taidtm_ft={finetuned:.4f} global_only={global_only:.4f}",
    )


def sparsity_check(runs: list[MetricsReport]) -> AcceptanceCheck:
    """Transfer gain over fine-tuning is non-negative everywhere and largest at the sparsest level."""
    gaps: dict[float, float] = {}
    for level in sorted({run.mean_annotations for run in runs}):
        means = _by_method([run for run in runs if run.mean_annotations == level], "test_accuracy")
        full, finetuned = means.get(Method.TAIDTM.value), means.get(Method.TAIDTM_FT.value)
        if full is not None and finetuned is not None:
            gaps[level] = full - finetuned
    if len(gaps) < 2:
        return AcceptanceCheck("sparsity_trend", None, "needs paired runs at two or more annotation levels")
    sparsest = min(gaps)
    passed = all(gap >= 0 for gap in gaps.values()) and gaps[sparsest] == max(gaps.values())
    detail = " ".join(f"r_bar={level:g}:gap={gap:.4f}" for level, gap in gaps.items())
    return AcceptanceCheck("sparsity_trend", passed, detail)


def transition_error_check(runs: list[MetricsReport]) -> AcceptanceCheck:
    """Graph-transferred heads estimate the ground truth better than fine-tuned heads."""
    means = _by_method(runs, "transition_error")
    full, finetuned = means.get(Method.TAIDTM.value), means.get(Method.TAIDTM_FT.value)
    if full is None or finetuned is None:
        return AcceptanceCheck("transition_error", None, "needs taidtm and taidtm_ft runs with ground truth")
    return AcceptanceCheck("transition_error", full < finetuned, f"taidtm={full:.4f} taidtm_ft={finetuned:.4f}")


class ReportService:
    """Builds report.csv and acceptance.json from finished runs."""

    def build_report(self, command: ReportCommand) -> list[AcceptanceCheck]:
        """Reject any run whose artifacts disagree with its manifest."""
        if not command.run_dirs:
            raise DataError("no run directories given")
        runs = [load_metrics(run_dir) for run_dir in command.run_dirs]
        rows = [
            {"run": run_dir.name, **{key: value for key, value in run.to_dict().items() if key in REPORT_HEADER}}
            for run_dir, run in zip(command.run_dirs, runs)
        ]
        write_rows(command.out_dir / REPORT_FILE, REPORT_HEADER, rows)
        checks = [ordering_check(runs), sparsity_check(runs), transition_error_check(runs)]
        write_json(command.out_dir / ACCEPTANCE_FILE, {"checks": [asdict(check) for check in checks]})
        for check in checks:
            logger.info("Acceptance check", name=check.name, passed=check.passed, detail=check.detail)
        return checks
