"""Reading and writing point sets as JSON or CSV.

JSON documents look like ``{"kind": ..., "data": [[...], ...], "labels": [...], "meta": {...}}``
with ``labels`` and ``meta`` optional. CSV files hold planar points, one
``x,y[,label]`` row each, with an optional header row.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from ..errors import ParseError, SchemaMismatch
from ..geometry import OBSERVATION_DIMS, PLANAR, PointSet


def to_dict(points: PointSet) -> dict:
    # repr of a python float round-trips exactly, so json keeps full precision
    return {
        "kind": points.kind,
        "data": points.data.tolist(),
        "labels": None if points.labels is None else points.labels.tolist(),
        "meta": dict(points.meta),
    }


def from_dict(doc, source: str = "<document>") -> PointSet:
    if not isinstance(doc, dict):
        raise SchemaMismatch(f"{source}: top level must be an object")
    kind = doc.get("kind")
    if kind not in OBSERVATION_DIMS:
        raise SchemaMismatch(f"{source}: unknown kind {kind!r}")
    dim = OBSERVATION_DIMS[kind]
    rows = doc.get("data")
    if not isinstance(rows, list) or not rows:
        raise SchemaMismatch(f"{source}: 'data' must be a non-empty list of rows")
    for i, row in enumerate(rows):
        if not isinstance(row, list) or len(row) != dim:
            raise ParseError(f"{source}: data row {i} must have {dim} entries, got {_describe(row)}")
        for j, v in enumerate(row):
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
                raise ParseError(f"{source}: data row {i}, field {j} is not a finite number: {v!r}")
    labels = doc.get("labels")
    if labels is not None:
        if not isinstance(labels, list) or len(labels) != len(rows):
            raise SchemaMismatch(f"{source}: 'labels' must list one label per data row")
        for i, v in enumerate(labels):
            if isinstance(v, bool) or not isinstance(v, int) or v < 0:
                raise ParseError(f"{source}: label {i} is not a non-negative integer: {v!r}")
    meta = doc.get("meta") or {}
    if not isinstance(meta, dict):
        raise SchemaMismatch(f"{source}: 'meta' must be an object")
    return PointSet(kind, np.array(rows, dtype=float), labels, meta)


def _describe(row) -> str:
    return f"{len(row)}" if isinstance(row, list) else type(row).__name__


def read_json(path) -> PointSet:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return from_dict(doc, str(path))


def write_json(points: PointSet, path) -> None:
    Path(path).write_text(json.dumps(to_dict(points), indent=1) + "\n")


def read_csv(path) -> PointSet:
    path = Path(path)
    data, labels = [], []
    with path.open(newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if lineno == 1 and not _numeric(row[0]):
                continue  # header
            if len(row) not in (2, 3):
                raise ParseError(f"{path}: line {lineno} has {len(row)} fields, expected x,y[,label]")
            try:
                x, y = float(row[0]), float(row[1])
            except ValueError as exc:
                raise ParseError(f"{path}: line {lineno}: {exc}") from exc
            if not (math.isfinite(x) and math.isfinite(y)):
                raise ParseError(f"{path}: line {lineno}: coordinates must be finite")
            data.append((x, y))
            if len(row) == 3:
                try:
                    labels.append(int(row[2]))
                except ValueError as exc:
                    raise ParseError(f"{path}: line {lineno}, label: {exc}") from exc
    if not data:
        raise SchemaMismatch(f"{path}: no data rows")
    if labels and len(labels) != len(data):
        raise SchemaMismatch(f"{path}: labels given for only some rows")
    if any(v < 0 for v in labels):
        raise SchemaMismatch(f"{path}: labels must be non-negative")
    return PointSet(PLANAR, np.array(data), labels or None)


def _numeric(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def write_csv(points: PointSet, path) -> None:
    if points.kind != PLANAR:
        raise SchemaMismatch("CSV holds planar points only")
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        if points.labels is None:
            w.writerow(["x", "y"])
            w.writerows([repr(x), repr(y)] for x, y in points.data.tolist())
        else:
            w.writerow(["x", "y", "label"])
            w.writerows([repr(x), repr(y), int(l)] for (x, y), l in zip(points.data.tolist(), points.labels))


def read_points(path) -> PointSet:
    return read_csv(path) if str(path).lower().endswith(".csv") else read_json(path)


def write_points(points: PointSet, path) -> None:
    if str(path).lower().endswith(".csv"):
        write_csv(points, path)
    else:
        write_json(points, path)
