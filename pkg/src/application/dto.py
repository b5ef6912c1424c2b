"""Application DTOs."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Optional


def finite_or_none(value: Optional[float]) -> Optional[float]:
    """NaN/Inf become None so JSON output stays standard."""
    if value is None or not math.isfinite(value):
        return None
    return float(value)


@dataclass(frozen=True)
class AnnotatorSummary:
    """Distilled examples per annotator."""

    min: int
    mean: float
    max: int
    insufficient: int


@dataclass(frozen=True)
class MetricsReport:
    """Deterministic outcome of one pipeline run."""

    method: str
    replicate: int
    seed: int
    config_hash: str
    test_accuracy: float
    transition_error: Optional[float]
    noisy_agreement: Optional[float]
    mean_annotations: float
    num_groups: int
    k: int
    rho: float
    m: Optional[int] = None
    m_j: Optional[AnnotatorSummary] = None
    distilled_purity: Optional[float] = None
    graph_recovery: Optional[float] = None
    final_losses: dict[str, Optional[float]] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, payload: dict[str, Any]) -> MetricsReport:
        data = dict(payload)
        if data.get("m_j") is not None:
            data["m_j"] = AnnotatorSummary(**data["m_j"])
        return cls(**data)


@dataclass(frozen=True)
class RunResult:
    """Metrics plus where the artifacts went and how long each stage took."""

    metrics: Optional[MetricsReport]
    directory: Path
    stages: tuple[str, ...]
    timings: dict[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class SweepRow:
    """One ablation cell."""

    param: str
    value: str
    method: str
    seed: int
    config_hash: str
    test_accuracy: float
    transition_error: Optional[float]
    noisy_agreement: Optional[float]
    wall_time: float

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class AcceptanceCheck:
    """Ordinal claim evaluated on aggregated runs; passed is None without enough runs."""

    name: str
    passed: Optional[bool]
    detail: str
