"""Model files (canonical JSON) and count-data CSV readers."""

import csv
import json
import math

import numpy as np

from .cdph import CdphParams
from .dph import DphParams
from .estimate import CountDataset

SCHEMA_VERSION = 1


class DataFormatError(ValueError):
    """Malformed or unusable input file."""


def _number(x):
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"cannot serialise non-finite value {x}")
    return format(x, ".17g")


def _emit(obj, indent, level):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_emit(obj[k], indent, level + 1)}" for k in sorted(obj)]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, (list, tuple)):
        if all(not isinstance(v, (list, tuple, dict, np.ndarray)) for v in obj):
            return "[" + ", ".join(_emit(v, indent, level + 1) for v in obj) + "]"
        items = [pad + _emit(v, indent, level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    if obj is None or isinstance(obj, (bool, str)):
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    return _number(obj)


def canonical_json(obj):
    """Deterministic JSON: sorted keys, floats as 17 significant digits."""
    return _emit(obj, 2, 0) + "\n"


def model_to_dict(params, provenance=None):
    if isinstance(params, CdphParams):
        body = {
            "kind": "cdph",
            "dims": list(params.dims),
            "alpha": params.alpha,
            "P": params.P,
            "U": params.U,
            "Q1": params.Q1,
            "Q2": params.Q2,
            "shift": [float(s) for s in params.shift],
        }
    elif isinstance(params, DphParams):
        body = {"kind": "dph", "dims": [params.dim], "alpha": params.alpha, "P": params.P}
    else:
        raise TypeError(f"cannot serialise {type(params).__name__}")
    body["schema_version"] = SCHEMA_VERSION
    body["provenance"] = dict(provenance or {})
    return body


def model_from_dict(obj):
    if not isinstance(obj, dict):
        raise DataFormatError("model file must hold a JSON object")
    version = obj.get("schema_version")
    if version != SCHEMA_VERSION:
        raise DataFormatError(f"unsupported schema_version {version!r}")
    kind = obj.get("kind")
    try:
        if kind == "cdph":
            return CdphParams(*(np.asarray(obj[k], dtype=float) for k in ("alpha", "P", "U", "Q1", "Q2")),
                              tuple(float(s) for s in obj["shift"]))
        if kind == "dph":
            return DphParams(np.asarray(obj["alpha"], dtype=float), np.asarray(obj["P"], dtype=float))
    except KeyError as exc:
        raise DataFormatError(f"model file lacks field {exc.args[0]!r}") from None
    except ValueError as exc:
        raise DataFormatError(f"invalid model parameters: {exc}") from None
    raise DataFormatError(f"unknown model kind {kind!r}")


def dump_model(params, provenance=None):
    return canonical_json(model_to_dict(params, provenance))


def write_model(path, params, provenance=None):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dump_model(params, provenance))


def read_model(path):
    """Returns ``(params, provenance)``."""
    try:
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
    except OSError as exc:
        raise DataFormatError(f"{path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    try:
        return model_from_dict(obj), obj.get("provenance", {})
    except DataFormatError as exc:
        raise DataFormatError(f"{path}: {exc}") from None


def _open_rows(path):
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataFormatError(f"{path}: {exc.strerror}") from None
    except UnicodeDecodeError:
        raise DataFormatError(f"{path}: not valid UTF-8") from None
    rows = [(i + 1, r) for i, r in enumerate(rows) if any(c.strip() for c in r)]
    if not rows:
        raise DataFormatError(f"{path}: file is empty")
    return rows


def _parse(cell, path, line, what, integer=False):
    try:
        value = float(cell)
    except ValueError:
        raise DataFormatError(f"{path}:{line}: {what} {cell.strip()!r} is not a number") from None
    if not math.isfinite(value):
        raise DataFormatError(f"{path}:{line}: {what} must be finite")
    if integer and value != int(value):
        raise DataFormatError(f"{path}:{line}: {what} {cell.strip()!r} is not an integer")
    return value


def read_pairs_csv(path, shift):
    """Rows ``n1,n2[,weight]`` under a header naming those columns."""
    rows = _open_rows(path)
    header_line, header = rows[0]
    names = [h.strip().lower() for h in header]
    if "n1" not in names or "n2" not in names:
        raise DataFormatError(f"{path}:{header_line}: header must name columns n1 and n2, got {header}")
    i1, i2 = names.index("n1"), names.index("n2")
    iw = names.index("weight") if "weight" in names else None
    if len(rows) == 1:
        raise DataFormatError(f"{path}: no data rows")
    x1, x2, w = [], [], []
    for line, row in rows[1:]:
        if len(row) != len(header):
            raise DataFormatError(f"{path}:{line}: expected {len(header)} fields, found {len(row)}")
        x1.append(_parse(row[i1], path, line, "n1"))
        x2.append(_parse(row[i2], path, line, "n2"))
        weight = 1.0 if iw is None else _parse(row[iw], path, line, "weight", integer=True)
        if weight < 1:
            raise DataFormatError(f"{path}:{line}: weight must be a positive integer")
        w.append(int(weight))
    try:
        return CountDataset.from_observations(x1, x2, shift=shift, weights=w)
    except ValueError as exc:
        raise DataFormatError(f"{path}: {exc}") from None


def read_frequency_table(path, shift):
    """Two-way table: first row holds ``n2`` labels, first column ``n1`` labels, cells counts."""
    rows = _open_rows(path)
    header_line, header = rows[0]
    if len(header) < 2:
        raise DataFormatError(f"{path}:{header_line}: table needs at least one n2 column")
    n2_labels = [_parse(c, path, header_line, "n2 label") for c in header[1:]]
    x1, x2, w = [], [], []
    for line, row in rows[1:]:
        if len(row) != len(header):
            raise DataFormatError(f"{path}:{line}: expected {len(header)} fields, found {len(row)}")
        n1 = _parse(row[0], path, line, "n1 label")
        for n2, cell in zip(n2_labels, row[1:]):
            count = _parse(cell, path, line, "count", integer=True) if cell.strip() else 0.0
            if count < 0:
                raise DataFormatError(f"{path}:{line}: counts must be non-negative")
            if count > 0:
                x1.append(n1)
                x2.append(n2)
                w.append(int(count))
    if not w:
        raise DataFormatError(f"{path}: table holds no observations")
    try:
        return CountDataset.from_observations(x1, x2, shift=shift, weights=w)
    except ValueError as exc:
        raise DataFormatError(f"{path}: {exc}") from None


def write_pairs_csv(path_or_handle, data):
    """Inverse of :func:`read_pairs_csv` for a :class:`CountDataset`."""
    lines = ["n1,n2,weight\n"]
    for (a, b), wt in zip(data.values, data.weights):
        lines.append(f"{format(a, '.17g')},{format(b, '.17g')},{int(wt)}\n")
    text = "".join(lines)
    if hasattr(path_or_handle, "write"):
        path_or_handle.write(text)
    else:
        with open(path_or_handle, "w", encoding="utf-8") as fh:
            fh.write(text)
