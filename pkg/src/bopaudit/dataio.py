"""CSV datasets, model JSON files and report schemas."""

from __future__ import annotations

import csv
import json
import math
from importlib import resources
from pathlib import Path

import numpy as np

from .core import AuditDataset, AuditError, Task
from .models import PredictiveModel, model_from_dict

SCHEMA_VERSION = "1.0"
MAX_BINS = 128


class DataError(AuditError):
    """Malformed input file."""


def _parse_header(header: list[str]) -> tuple[int, int]:
    if not header or header[-1] != "y":
        raise DataError("line 1: header must end with column 'y'")
    cols = header[:-1]
    t = sum(1 for c in cols if c.startswith("x_"))
    k = len(cols) - t
    expected = [f"x_{i}" for i in range(t)] + [f"s_{i}" for i in range(k)]
    if cols != expected:
        raise DataError(f"line 1: expected columns {','.join(expected + ['y'])}")
    if t < 1:
        raise DataError("line 1: need at least one feature column x_0")
    return t, k


def read_dataset_csv(path, task: Task | str) -> AuditDataset:
    """Read ``x_0..x_{t-1},s_0..s_{k-1},y``. Missing or non-numeric cells are rejected."""
    task = Task(task)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        t, k = _parse_header([h.strip() for h in header])
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != t + k + 1:
                raise DataError(f"line {lineno}: expected {t + k + 1} fields, got {len(row)}")
            try:
                vals = [float(v) for v in row]
            except ValueError:
                raise DataError(f"line {lineno}: non-numeric or missing value") from None
            if not all(math.isfinite(v) for v in vals):
                raise DataError(f"line {lineno}: non-finite value")
            s = vals[t:t + k]
            if any(v not in (0.0, 1.0) for v in s):
                raise DataError(f"line {lineno}: group attribute not in {{0,1}}")
            if task is Task.CLASSIFICATION and vals[-1] not in (0.0, 1.0):
                raise DataError(f"line {lineno}: classification label must be 0 or 1")
            rows.append(vals)
    if not rows:
        raise DataError(f"{path}: no data rows")
    arr = np.array(rows, dtype=np.float64)
    return AuditDataset(arr[:, :t], arr[:, t:t + k], arr[:, -1], task)


def write_dataset_csv(dataset: AuditDataset, path) -> None:
    """Write with ``repr`` floats so a re-read is bit-identical."""
    header = [f"x_{i}" for i in range(dataset.t)] + [f"s_{i}" for i in range(dataset.k)] + ["y"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for x, s, y in zip(dataset.features, dataset.group_attrs, dataset.labels):
            w.writerow([repr(float(v)) for v in x] + [str(int(v)) for v in s] + [repr(float(y))])


def save_model(model: PredictiveModel, path) -> None:
    Path(path).write_text(json.dumps(model.to_dict(), indent=2))


def load_model(path) -> PredictiveModel:
    try:
        return model_from_dict(json.loads(Path(path).read_text()))
    except (json.JSONDecodeError, TypeError) as exc:
        raise DataError(f"{path}: invalid model file ({exc})") from None


def histogram(values) -> dict:
    """Freedman-Diaconis bins, capped at ``MAX_BINS``."""
    values = np.asarray(values, dtype=np.float64)
    edges = np.histogram_bin_edges(values, bins="fd")
    if len(edges) - 1 > MAX_BINS:
        edges = np.histogram_bin_edges(values, bins=MAX_BINS)
    counts, edges = np.histogram(values, bins=edges)
    return {"edges": edges.tolist(), "counts": counts.tolist()}


def load_schema(name: str) -> dict:
    """Shipped JSON schema, by file name or by stem (``"audit_report"``)."""
    if not name.endswith(".json"):
        name += ".schema.json"
    return json.loads(resources.files("bopaudit").joinpath("schemas", name).read_text())


def validate(report: dict, name: str) -> None:
    import jsonschema

    jsonschema.validate(report, load_schema(name))


def read_group_file(path) -> tuple[list[int], list[float] | None]:
    """Per-group ``m`` or ``m,scale`` lines (blank lines and ``#`` comments ignored)."""
    sizes, scales = [], []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = [p.strip() for p in line.split(",")]
        try:
            sizes.append(int(parts[0]))
            if len(parts) > 1:
                scales.append(float(parts[1]))
        except ValueError:
            raise DataError(f"line {lineno}: expected 'm' or 'm,scale'") from None
    if not sizes:
        raise DataError(f"{path}: no group sizes")
    if scales and len(scales) != len(sizes):
        raise DataError(f"{path}: give a scale on every line or on none")
    return sizes, (scales or None)
