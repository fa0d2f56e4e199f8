"""Dataset files, result tables and flat ``key = value`` config files."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .dataset import LabeledDataset
from .errors import DataFormatError, LLSVMError

FORMATS = ("dense_csv", "sparse")


def fmt(v) -> str:
    """Round-trip-safe text for a number."""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    return str(v)


def _label(text: str, lineno: int) -> float:
    try:
        v = float(text)
    except ValueError:
        raise DataFormatError(f"label {text!r} is not a number", lineno) from None
    if v in (1.0, -1.0):
        return v
    if v == 0.0:
        return -1.0
    raise DataFormatError(f"label {text!r} is not one of -1, +1, 0, 1", lineno)


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def _content_lines(path):
    with open(path, newline="") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            yield lineno, stripped


def _parse_dense(path) -> LabeledDataset:
    labels, rows = [], []
    width = None
    first = True
    for lineno, line in _content_lines(path):
        fields = [f.strip() for f in next(csv.reader([line]))]
        if first:
            first = False
            if not _is_number(fields[0]):
                continue  # header row
        if len(fields) < 2:
            raise DataFormatError("expected a label and at least one feature", lineno)
        if width is None:
            width = len(fields)
        elif len(fields) != width:
            raise DataFormatError(f"expected {width} columns, found {len(fields)}", lineno)
        labels.append(_label(fields[0], lineno))
        try:
            rows.append([float(f) for f in fields[1:]])
        except ValueError:
            raise DataFormatError("non-numeric feature value", lineno) from None
    if not rows:
        raise DataFormatError("no data rows")
    return LabeledDataset(np.array(rows), np.array(labels))


def _parse_sparse(path) -> LabeledDataset:
    labels, entries = [], []
    dim = 0
    for lineno, line in _content_lines(path):
        parts = line.split()
        labels.append(_label(parts[0], lineno))
        row = {}
        for tok in parts[1:]:
            key, sep, val = tok.partition(":")
            if not sep:
                raise DataFormatError(f"malformed entry {tok!r}", lineno)
            try:
                j, v = int(key), float(val)
            except ValueError:
                raise DataFormatError(f"malformed entry {tok!r}", lineno) from None
            if j < 1:
                raise DataFormatError(f"feature index {j} must be >= 1", lineno)
            row[j] = v
            dim = max(dim, j)
        entries.append(row)
    if not entries:
        raise DataFormatError("no data rows")
    if dim == 0:
        raise DataFormatError("no features present")
    X = np.zeros((len(entries), dim))
    for i, row in enumerate(entries):
        for j, v in row.items():
            X[i, j - 1] = v
    return LabeledDataset(X, np.array(labels))


def parse_dataset(path, format: str = "dense_csv") -> LabeledDataset:
    """Read a labelled dataset.

    ``dense_csv``: optional header, label in the first column, features after.
    ``sparse``: ``<label> idx:val ...`` with 1-based indices and implicit zeros.
    Labels ``0`` are read as ``-1``.  Lines starting with ``#`` are ignored.
    """
    if format == "dense_csv":
        return _parse_dense(path)
    if format == "sparse":
        return _parse_sparse(path)
    raise LLSVMError(f"unknown dataset format {format!r}")


def read_points(path, dim: int | None = None) -> tuple[np.ndarray, np.ndarray | None]:
    """Read query points from a numeric CSV.

    When ``dim`` is given and rows carry ``dim + 1`` columns, the first column
    is taken as a label and returned separately.
    """
    rows = []
    first = True
    for lineno, line in _content_lines(path):
        fields = [f.strip() for f in next(csv.reader([line]))]
        if first:
            first = False
            if not _is_number(fields[0]):
                continue
        try:
            rows.append([float(f) for f in fields])
        except ValueError:
            raise DataFormatError("non-numeric value", lineno) from None
        if len(rows[-1]) != len(rows[0]):
            raise DataFormatError(f"expected {len(rows[0])} columns, found {len(rows[-1])}", lineno)
    if not rows:
        raise DataFormatError("no query rows")
    arr = np.array(rows)
    if dim is not None and arr.shape[1] == dim + 1:
        labels = np.array([_label(fmt(v), i + 1) for i, v in enumerate(arr[:, 0])])
        return arr[:, 1:], labels
    if dim is not None and arr.shape[1] != dim:
        raise DataFormatError(f"queries have {arr.shape[1]} columns, training data has {dim}")
    return arr, None


def write_dataset(path, dataset: LabeledDataset, comment: str | None = None, format: str = "dense_csv"):
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        for y, x in zip(dataset.labels, dataset.points):
            lab = "+1" if y > 0 else "-1"
            if format == "sparse":
                feats = " ".join(f"{j + 1}:{fmt(v)}" for j, v in enumerate(x) if v != 0.0)
                fh.write(f"{lab} {feats}".rstrip() + "\n")
            else:
                fh.write(",".join([lab] + [fmt(v) for v in x]) + "\n")


def write_table(path, header: Sequence[str], rows: Iterable[Sequence], comment: str | None = None):
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    return obj


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


def write_keyvalue(path, mapping: dict) -> None:
    with open(path, "w") as fh:
        for k in sorted(mapping):
            fh.write(f"{k} = {fmt(mapping[k])}\n")


def read_keyvalue(path) -> dict:
    """Parse flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, val = line.partition("=")
            if not sep or not key.strip():
                raise DataFormatError(f"expected 'key = value', got {raw.strip()!r}", lineno)
            out[key.strip().replace("-", "_")] = val.strip()
    return out
