"""CSV/JSON storage of instances, annotations and the annotator pool."""
from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Any, Iterator, Optional

import numpy as np
import structlog

from src.domain.crowdsim import WITHHELD_LABEL, AnnotatorPool, CleanDataset, CrowdDataset
from src.domain.exceptions import ConfigError, DataError, ShapeError
from src.domain.value_objects import FlipRateScope, Split

INSTANCES_FILE = "instances.csv"
ANNOTATIONS_FILE = "annotations.csv"
POOL_FILE = "pool.json"
ANNOTATION_HEADER = ["instance_id", "annotator_id", "noisy_label"]

logger = structlog.get_logger(__name__)


def format_float(value: float) -> str:
    """Shortest text that parses back to the same float64."""
    return repr(float(value))


def _rows(path: Path, header: list[str]) -> Iterator[tuple[int, dict[str, str]]]:
    """(line number, row) pairs after checking the header."""
    try:
        handle = path.open(newline="", encoding="utf-8")
    except OSError as error:
        raise DataError(f"cannot open {path.name}: {error}") from error
    with handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames != header:
            raise DataError(f"{path.name}: expected header {','.join(header)}", line=1)
        for row in reader:
            yield reader.line_num, row


def _parse_int(value: Optional[str], line: int, field: str) -> int:
    try:
        return int(value or "")
    except ValueError as error:
        raise DataError(f"not an integer: {value!r}", line=line, field=field) from error


def _parse_float(value: Optional[str], line: int, field: str) -> float:
    try:
        return float(value or "")
    except ValueError as error:
        raise DataError(f"not a number: {value!r}", line=line, field=field) from error


def write_instances(path: Path, clean: CleanDataset) -> None:
    """`id,f0..f{d-1},true_label,split`."""
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["id", *(f"f{k}" for k in range(clean.dim)), "true_label", "split"])
        for i in range(clean.size):
            writer.writerow(
                [
                    i,
                    *(format_float(v) for v in clean.features[i]),
                    int(clean.true_labels[i]),
                    clean.splits[i].value,
                ]
            )


def read_instances(path: Path, num_classes: Optional[int] = None) -> CleanDataset:
    """Parse an instances file; ids must run 0..n-1 in order."""
    try:
        with path.open(newline="", encoding="utf-8") as handle:
            header = next(csv.reader(handle), [])
    except OSError as error:
        raise DataError(f"cannot open {path.name}: {error}") from error
    dim = len(header) - 3
    expected = ["id", *(f"f{k}" for k in range(dim)), "true_label", "split"]
    if dim < 1 or header != expected:
        raise DataError(f"{path.name}: header must be id,f0,...,true_label,split", line=1)

    features: list[list[float]] = []
    labels: list[int] = []
    splits: list[Split] = []
    for line, row in _rows(path, expected):
        if _parse_int(row["id"], line, "id") != len(features):
            raise DataError("ids must be 0..n-1 in order", line=line, field="id")
        features.append([_parse_float(row[f"f{k}"], line, f"f{k}") for k in range(dim)])
        label = _parse_int(row["true_label"], line, "true_label")
        if label < WITHHELD_LABEL or (num_classes is not None and label >= num_classes):
            raise DataError(f"label {label} out of range", line=line, field="true_label")
        labels.append(label)
        try:
            splits.append(Split(row["split"]))
        except ValueError as error:
            raise DataError(f"unknown split {row['split']!r}", line=line, field="split") from error
    if not features:
        raise DataError(f"{path.name} has no instances")
    true_labels = np.array(labels, dtype=np.int64)
    return CleanDataset(
        features=np.array(features, dtype=np.float64),
        true_labels=true_labels,
        splits=tuple(splits),
        num_classes=num_classes or int(max(true_labels.max(), 1)) + 1,
    )


def write_annotations(path: Path, crowd: CrowdDataset) -> None:
    """`instance_id,annotator_id,noisy_label` in stored order."""
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(ANNOTATION_HEADER)
        for i, j, label in zip(crowd.instance_ids, crowd.annotator_ids, crowd.labels):
            writer.writerow([int(i), int(j), int(label)])


def read_annotations(
    path: Path, num_instances: int, num_annotators: Optional[int], num_classes: Optional[int]
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Parse annotation triples, naming the offending row on any bad id."""
    instance_ids: list[int] = []
    annotator_ids: list[int] = []
    labels: list[int] = []
    for line, row in _rows(path, ANNOTATION_HEADER):
        instance = _parse_int(row["instance_id"], line, "instance_id")
        annotator = _parse_int(row["annotator_id"], line, "annotator_id")
        label = _parse_int(row["noisy_label"], line, "noisy_label")
        if not 0 <= instance < num_instances:
            raise DataError(f"unknown instance {instance}", line=line, field="instance_id")
        if annotator < 0 or (num_annotators is not None and annotator >= num_annotators):
            raise DataError(f"unknown annotator {annotator}", line=line, field="annotator_id")
        if label < 0 or (num_classes is not None and label >= num_classes):
            raise DataError(f"label {label} out of range", line=line, field="noisy_label")
        instance_ids.append(instance)
        annotator_ids.append(annotator)
        labels.append(label)
    return (
        np.array(instance_ids, dtype=np.int64),
        np.array(annotator_ids, dtype=np.int64),
        np.array(labels, dtype=np.int64),
    )


def pool_to_dict(pool: AnnotatorPool) -> dict[str, Any]:
    """JSON-ready pool description."""
    return {
        "R": pool.num_annotators,
        "G": pool.num_groups,
        "rho": pool.rho,
        "rho_max": pool.rho_max,
        "scope": pool.scope.value,
        "group_of": pool.group_of.tolist(),
        "flip_rates": pool.flip_rates.tolist(),
        "projections": pool.projections.tolist(),
    }


def pool_from_dict(payload: dict[str, Any]) -> AnnotatorPool:
    """Inverse of pool_to_dict."""
    try:
        pool = AnnotatorPool(
            group_of=np.array(payload["group_of"], dtype=np.int64),
            flip_rates=np.array(payload["flip_rates"], dtype=np.float64),
            projections=np.array(payload["projections"], dtype=np.float64),
            rho=float(payload["rho"]),
            rho_max=float(payload["rho_max"]),
            scope=FlipRateScope(payload.get("scope", FlipRateScope.GROUP.value)),
        )
    except (KeyError, TypeError, ValueError, ConfigError, ShapeError) as error:
        raise DataError(f"malformed pool file: {error}") from error
    if pool.num_annotators != payload.get("R") or pool.num_groups != payload.get("G"):
        raise DataError("pool file R/G disagree with its arrays", field="R")
    return pool


def save_crowd(directory: Path, crowd: CrowdDataset) -> list[Path]:
    """Write instances, annotations and (when known) the pool."""
    directory.mkdir(parents=True, exist_ok=True)
    written = [directory / INSTANCES_FILE, directory / ANNOTATIONS_FILE]
    write_instances(written[0], crowd.base)
    write_annotations(written[1], crowd)
    if crowd.pool is not None:
        written.append(directory / POOL_FILE)
        written[-1].write_text(json.dumps(pool_to_dict(crowd.pool), sort_keys=True) + "\n", encoding="utf-8")
    logger.info("Saved crowd dataset", directory=str(directory), annotations=crowd.num_annotations)
    return written


def load_crowd(
    directory: Path, num_classes: Optional[int] = None, num_annotators: Optional[int] = None
) -> CrowdDataset:
    """Load a crowd directory; without a pool file, counts come from arguments or the data."""
    pool = None
    pool_path = directory / POOL_FILE
    if pool_path.exists():
        try:
            pool = pool_from_dict(json.loads(pool_path.read_text(encoding="utf-8")))
        except json.JSONDecodeError as error:
            raise DataError(f"{POOL_FILE}: {error.msg}", line=error.lineno) from error
        num_classes = num_classes or pool.num_classes
        num_annotators = num_annotators or pool.num_annotators

    clean = read_instances(directory / INSTANCES_FILE, num_classes)
    instance_ids, annotator_ids, labels = read_annotations(
        directory / ANNOTATIONS_FILE, clean.size, num_annotators, num_classes
    )
    if num_classes is None and labels.size and labels.max() >= clean.num_classes:
        clean = CleanDataset(clean.features, clean.true_labels, clean.splits, int(labels.max()) + 1)
    if num_annotators is None:
        num_annotators = int(annotator_ids.max()) + 1 if annotator_ids.size else 0
    flip = None
    if pool is not None and instance_ids.size:
        # rows of withheld items stay NaN
        flip = np.full((instance_ids.shape[0], clean.num_classes), np.nan)
        known = clean.known()[instance_ids]
        if np.any(known):
            flip[known] = pool.transition_matrices(
                clean.features[instance_ids[known]], annotator_ids[known]
            )[np.arange(int(known.sum())), clean.true_labels[instance_ids[known]]]
    return CrowdDataset(
        base=clean,
        instance_ids=instance_ids,
        annotator_ids=annotator_ids,
        labels=labels,
        num_annotators=num_annotators,
        pool=pool,
        flip_distributions=flip,
    )
