"""The (N+1)x(N+1) cross-performance grid and its diagonal normalization.

Row index = training dataset, column index = test dataset, and the synthetic
dataset under test always sits at index 0. Normalizing each row by its
diagonal entry turns raw metric values into transfer ratios: entry (i, j)
becomes cells[i][j] / cells[i][i], so diagonals are exactly 1 and every row
is invariant under uniform positive rescaling.

Ratios above 1 are legal and preserved; a model can genuinely beat its
in-domain score on another domain. Rounding happens only in report
rendering, never here.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass
from pathlib import Path

from .errors import DuplicateCell, MissingCell, MixedMetrics, SchemaError, ZeroDiagonal

KIND_PERFORMANCE = "cross_performance_matrix"
KIND_GCV = "gcv_matrix"


@dataclass(frozen=True)
class MetricValue:
    """One finite, non-negative measurement of a named metric."""

    value: float
    metric_name: str

    def __post_init__(self) -> None:
        if not math.isfinite(self.value):
            raise ValueError(f"metric {self.metric_name!r} value is not finite: {self.value}")
        if self.value < 0:
            raise ValueError(f"metric {self.metric_name!r} value is negative: {self.value}")
        if not self.metric_name:
            raise ValueError("metric_name must be non-empty")


def _check_grid(dataset_ids: tuple[str, ...], grid: tuple[tuple[float, ...], ...], what: str) -> None:
    side = len(dataset_ids)
    if side < 2:
        raise ValueError(f"{what} needs at least 2 datasets (1 synthetic + 1 reference), got {side}")
    if len(set(dataset_ids)) != side:
        raise ValueError(f"{what} dataset ids are not unique: {dataset_ids}")
    if len(grid) != side or any(len(row) != side for row in grid):
        raise ValueError(f"{what} grid is not {side}x{side}")
    for i, row in enumerate(grid):
        for j, v in enumerate(row):
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"{what} cell ({dataset_ids[i]}, {dataset_ids[j]}) is invalid: {v}")


@dataclass(frozen=True)
class CrossPerformanceMatrix:
    """Raw metric values for every ordered (train, test) dataset pair."""

    dataset_ids: tuple[str, ...]
    cells: tuple[tuple[float, ...], ...]
    metric_name: str

    def __post_init__(self) -> None:
        _check_grid(self.dataset_ids, self.cells, "performance matrix")

    @property
    def n_references(self) -> int:
        return len(self.dataset_ids) - 1


@dataclass(frozen=True)
class GcvMatrix:
    """Diagonal-normalized transfer ratios; diagonal entries are exactly 1."""

    dataset_ids: tuple[str, ...]
    ratios: tuple[tuple[float, ...], ...]
    metric_name: str

    def __post_init__(self) -> None:
        _check_grid(self.dataset_ids, self.ratios, "gcv matrix")
        for i, row in enumerate(self.ratios):
            if row[i] != 1.0:
                raise ValueError(f"diagonal entry for {self.dataset_ids[i]!r} is {row[i]}, not 1")

    @property
    def n_references(self) -> int:
        return len(self.dataset_ids) - 1

    def forward_ratios(self) -> tuple[float, ...]:
        """Row 0 at reference columns: synthetic -> reference transfers."""
        return self.ratios[0][1:]

    def reverse_ratios(self) -> tuple[float, ...]:
        """Column 0 at reference rows: reference -> synthetic transfers."""
        return tuple(self.ratios[i][0] for i in range(1, len(self.dataset_ids)))

    def fingerprint(self) -> str:
        return hashlib.sha256(to_json(self).encode("utf-8")).hexdigest()


def build_matrix(
    results,
    dataset_ids,
    metric_name: str | None = None,
) -> CrossPerformanceMatrix:
    """Assemble the grid from (train_id, test_id, MetricValue) triples.

    Exactly one result per ordered pair is required; the id sequence fixes
    the layout, synthetic dataset first.
    """
    ids = tuple(dataset_ids)
    index = {d: i for i, d in enumerate(ids)}
    side = len(ids)
    grid: list[list[float | None]] = [[None] * side for _ in range(side)]
    names: set[str] = set()
    for train_id, test_id, metric in results:
        if train_id not in index or test_id not in index:
            raise ValueError(
                f"result cell ({train_id!r}, {test_id!r}) references a dataset "
                f"outside the declared ids {ids}"
            )
        i, j = index[train_id], index[test_id]
        if grid[i][j] is not None:
            raise DuplicateCell(train_id, test_id)
        grid[i][j] = metric.value
        names.add(metric.metric_name)
    for i in range(side):
        for j in range(side):
            if grid[i][j] is None:
                raise MissingCell(ids[i], ids[j])
    if metric_name is not None:
        names.add(metric_name)
    if len(names) > 1:
        raise MixedMetrics(names)
    name = names.pop() if names else "metric"
    return CrossPerformanceMatrix(
        dataset_ids=ids,
        cells=tuple(tuple(row) for row in grid),  # type: ignore[arg-type]
        metric_name=name,
    )


def normalize(matrix: CrossPerformanceMatrix) -> GcvMatrix:
    """Divide each row by its diagonal cell, at full floating precision."""
    side = len(matrix.dataset_ids)
    rows = []
    for i in range(side):
        diag = matrix.cells[i][i]
        if diag == 0.0:
            raise ZeroDiagonal(matrix.dataset_ids[i])
        row = tuple(
            1.0 if j == i else matrix.cells[i][j] / diag
            for j in range(side)
        )
        rows.append(row)
    return GcvMatrix(
        dataset_ids=matrix.dataset_ids,
        ratios=tuple(rows),
        metric_name=matrix.metric_name,
    )


# --- interchange: JSON ------------------------------------------------------

def to_doc(matrix: CrossPerformanceMatrix | GcvMatrix) -> dict:
    if isinstance(matrix, CrossPerformanceMatrix):
        return {
            "kind": KIND_PERFORMANCE,
            "metric_name": matrix.metric_name,
            "dataset_ids": list(matrix.dataset_ids),
            "cells": [list(row) for row in matrix.cells],
        }
    return {
        "kind": KIND_GCV,
        "metric_name": matrix.metric_name,
        "dataset_ids": list(matrix.dataset_ids),
        "ratios": [list(row) for row in matrix.ratios],
    }


def to_json(matrix: CrossPerformanceMatrix | GcvMatrix) -> str:
    return json.dumps(to_doc(matrix), indent=2) + "\n"


def from_doc(doc: dict) -> CrossPerformanceMatrix | GcvMatrix:
    kind = doc.get("kind", KIND_PERFORMANCE)
    try:
        ids = tuple(str(d) for d in doc["dataset_ids"])
        metric_name = str(doc.get("metric_name", "metric"))
        key = "cells" if kind == KIND_PERFORMANCE else "ratios"
        grid = tuple(tuple(float(v) for v in row) for row in doc[key])
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"bad matrix document: {exc}")
    try:
        if kind == KIND_PERFORMANCE:
            return CrossPerformanceMatrix(dataset_ids=ids, cells=grid, metric_name=metric_name)
        if kind == KIND_GCV:
            return GcvMatrix(dataset_ids=ids, ratios=grid, metric_name=metric_name)
    except ValueError as exc:
        raise SchemaError(str(exc))
    raise SchemaError(f"unknown matrix kind {kind!r}")


def load(path: str | Path) -> CrossPerformanceMatrix | GcvMatrix:
    """Read a matrix from JSON or CSV, chosen by file suffix."""
    path = Path(path)
    if path.suffix.lower() == ".csv":
        return from_csv(path.read_text(encoding="utf-8"))
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path} is not valid JSON: {exc}")
    return from_doc(doc)


def save(matrix: CrossPerformanceMatrix | GcvMatrix, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if path.suffix.lower() == ".csv":
        path.write_text(to_csv(matrix), encoding="utf-8")
    else:
        path.write_text(to_json(matrix), encoding="utf-8")


# --- interchange: CSV -------------------------------------------------------
# Decimal serialization rule: repr(), the shortest string that round-trips.

def to_csv(matrix: CrossPerformanceMatrix | GcvMatrix) -> str:
    grid = matrix.cells if isinstance(matrix, CrossPerformanceMatrix) else matrix.ratios
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["train\\test", *matrix.dataset_ids])
    for dataset_id, row in zip(matrix.dataset_ids, grid):
        writer.writerow([dataset_id, *[repr(v) for v in row]])
    return buf.getvalue()


def from_csv(text: str, metric_name: str = "metric") -> CrossPerformanceMatrix:
    """Import raw metric values from CSV; row/column ids must agree."""
    rows = [r for r in csv.reader(io.StringIO(text)) if r]
    if not rows:
        raise SchemaError("empty CSV matrix")
    header = [c.strip() for c in rows[0][1:]]
    body = rows[1:]
    if len(body) != len(header):
        raise SchemaError(f"CSV matrix is {len(body)} rows by {len(header)} columns")
    row_ids = [r[0].strip() for r in body]
    if row_ids != header:
        raise SchemaError(f"CSV row ids {row_ids} do not match column ids {header}")
    try:
        grid = tuple(tuple(float(v) for v in r[1:]) for r in body)
    except ValueError as exc:
        raise SchemaError(f"non-numeric CSV cell: {exc}")
    if any(len(r) != len(header) for r in grid):
        raise SchemaError("ragged CSV matrix")
    try:
        return CrossPerformanceMatrix(
            dataset_ids=tuple(header), cells=grid, metric_name=metric_name
        )
    except ValueError as exc:
        raise SchemaError(str(exc))
