"""Edge-list CSV export of the annotator graph matrices."""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from src.domain.exceptions import DataError
from src.domain.graphtransfer import SimilarityGraph
from src.infrastructure.persistence.dataset_io import format_float

EDGE_HEADER = ["src", "dst", "weight"]


def write_edges(path: Path, matrix: np.ndarray, dense: bool = False) -> Path:
    """One `src,dst,weight` row per nonzero entry (every entry when dense)."""
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(EDGE_HEADER)
        for i in range(matrix.shape[0]):
            for j in range(matrix.shape[1]):
                if dense or matrix[i, j] != 0.0:
                    writer.writerow([i, j, format_float(matrix[i, j])])
    return path


def read_edges(path: Path, size: int) -> np.ndarray:
    """Rebuild a size x size matrix; absent entries are zero."""
    matrix = np.zeros((size, size))
    try:
        handle = path.open(newline="", encoding="utf-8")
    except OSError as error:
        raise DataError(f"cannot open {path.name}: {error}") from error
    with handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames != EDGE_HEADER:
            raise DataError(f"{path.name}: expected header src,dst,weight", line=1)
        for row in reader:
            line = reader.line_num
            try:
                i, j, weight = int(row["src"]), int(row["dst"]), float(row["weight"])
            except (TypeError, ValueError) as error:
                raise DataError(f"bad edge: {error}", line=line) from error
            if not (0 <= i < size and 0 <= j < size):
                raise DataError(f"node outside 0..{size - 1}", line=line, field="src" if not 0 <= i < size else "dst")
            matrix[i, j] = weight
    return matrix


def save_graph(directory: Path, graph: SimilarityGraph) -> list[Path]:
    """S (dense) plus A, A_star and A_hat (sparse) edge lists."""
    directory.mkdir(parents=True, exist_ok=True)
    return [
        write_edges(directory / "S.csv", graph.S, dense=True),
        write_edges(directory / "A.csv", graph.A),
        write_edges(directory / "A_star.csv", graph.A_star),
        write_edges(directory / "A_hat.csv", graph.A_hat),
    ]


def load_graph(directory: Path, size: int, k: int, rank: int) -> SimilarityGraph:
    """Inverse of save_graph."""
    return SimilarityGraph(
        S=read_edges(directory / "S.csv", size),
        A=read_edges(directory / "A.csv", size),
        A_star=read_edges(directory / "A_star.csv", size),
        A_hat=read_edges(directory / "A_hat.csv", size),
        k=k,
        rank=rank,
    )
