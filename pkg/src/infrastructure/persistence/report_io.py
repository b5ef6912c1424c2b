"""Metrics, manifests, distilled sets and sweep tables on disk."""
from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from src.domain.distill import DistilledSet
from src.domain.exceptions import DataError

METRICS_FILE = "metrics.json"
TIMINGS_FILE = "timings.json"
MANIFEST_FILE = "manifest.json"
DISTILLED_FILE = "distilled.csv"
DISTILLED_HEADER = ["instance_id", "y_star"]


def write_json(path: Path, payload: Mapping[str, Any]) -> Path:
    """Sorted-key, indented JSON with a trailing newline."""
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return path


def read_json(path: Path) -> dict[str, Any]:
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except OSError as error:
        raise DataError(f"cannot read {path}: {error}") from error
    except json.JSONDecodeError as error:
        raise DataError(f"{path.name}: {error.msg}", line=error.lineno) from error
    if not isinstance(payload, dict):
        raise DataError(f"{path.name} must hold a JSON object")
    return payload


def write_rows(path: Path, header: Sequence[str], rows: Iterable[Mapping[str, Any]]) -> Path:
    """CSV with a fixed header; missing keys are errors."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.DictWriter(handle, fieldnames=list(header), lineterminator="\n", extrasaction="ignore")
        writer.writeheader()
        for row in rows:
            writer.writerow({key: row[key] for key in header})
    return path


def read_rows(path: Path) -> list[dict[str, str]]:
    try:
        with path.open(newline="", encoding="utf-8") as handle:
            return list(csv.DictReader(handle))
    except OSError as error:
        raise DataError(f"cannot read {path}: {error}") from error


def write_distilled(path: Path, distilled: DistilledSet) -> Path:
    """`instance_id,y_star` per distilled example."""
    return write_rows(
        path,
        DISTILLED_HEADER,
        ({"instance_id": e.instance_id, "y_star": e.y_star} for e in distilled.examples),
    )


def read_distilled(path: Path) -> list[tuple[int, int]]:
    """(instance_id, y_star) pairs."""
    pairs = []
    for line, row in enumerate(read_rows(path), start=2):
        try:
            pairs.append((int(row["instance_id"]), int(row["y_star"])))
        except (KeyError, TypeError, ValueError) as error:
            raise DataError(f"bad distilled row: {error}", line=line) from error
    return pairs


def sha256_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(directory: Path, config_hash: str, files: Iterable[Path]) -> Path:
    """config_hash plus the SHA-256 of every artifact, keyed by relative path."""
    digests = {
        path.relative_to(directory).as_posix(): sha256_file(path)
        for path in sorted(set(files))
        if path.name != MANIFEST_FILE
    }
    return write_json(directory / MANIFEST_FILE, {"config_hash": config_hash, "files": digests})


def verify_manifest(directory: Path) -> str:
    """Config hash of a run directory after checking metrics and artifact digests."""
    manifest = read_json(directory / MANIFEST_FILE)
    config_hash = manifest.get("config_hash")
    if not isinstance(config_hash, str):
        raise DataError(f"{directory / MANIFEST_FILE} lacks a config hash", field="config_hash")
    metrics = read_json(directory / METRICS_FILE)
    if metrics.get("config_hash") != config_hash:
        raise DataError(
            f"{directory.name}: metrics hash {metrics.get('config_hash')} does not match manifest {config_hash}",
            field="config_hash",
        )
    for name, digest in manifest.get("files", {}).items():
        path = directory / name
        if not path.exists() or sha256_file(path) != digest:
            raise DataError(f"{directory.name}: artifact {name} is missing or modified", field=name)
    return config_hash
