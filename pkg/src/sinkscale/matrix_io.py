"""Reading and writing matrices, vectors and JSON sidecars.

Two matrix formats are understood:

* plain text: a first line ``"m n"`` followed by ``m`` lines of ``n`` reals;
* JSON: ``{"rows": m, "cols": n, "entries": [...]}`` with row-major entries.

Files ending in ``.json`` use the JSON form, everything else the text form.
``inf`` is accepted in either (JSON via the string ``"inf"``).
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np


def _is_json(path):
    return str(path).lower().endswith(".json")


def _num(x):
    # JSON has no infinities, so they travel as the strings "inf" / "-inf"
    return float(x)


def parse_matrix_text(text):
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        raise ValueError("empty matrix file")
    head = lines[0].split()
    if len(head) != 2:
        raise ValueError("first line must be 'm n'")
    m, n = int(head[0]), int(head[1])
    rows = [[float(tok) for tok in ln.split()] for ln in lines[1:]]
    if len(rows) != m or any(len(r) != n for r in rows):
        raise ValueError(f"expected {m} rows of {n} values")
    return np.array(rows, dtype=float).reshape(m, n)


def format_matrix_text(a):
    a = np.asarray(a, dtype=float)
    m, n = a.shape
    out = [f"{m} {n}"]
    out += [" ".join(repr(float(x)) for x in row) for row in a]
    return "\n".join(out) + "\n"


def matrix_to_json(a):
    a = np.asarray(a, dtype=float)
    entries = [x if math.isfinite(x) else ("inf" if x > 0 else "-inf") for x in a.ravel().tolist()]
    return {"rows": int(a.shape[0]), "cols": int(a.shape[1]), "entries": entries}


def matrix_from_json(obj):
    m, n = int(obj["rows"]), int(obj["cols"])
    entries = [_num(x) for x in obj["entries"]]
    if len(entries) != m * n:
        raise ValueError(f"expected {m * n} entries, got {len(entries)}")
    return np.array(entries, dtype=float).reshape(m, n)


def read_matrix(path):
    text = Path(path).read_text()
    if _is_json(path):
        return matrix_from_json(json.loads(text))
    return parse_matrix_text(text)


def write_matrix(path, a):
    path = Path(path)
    if _is_json(path):
        path.write_text(json.dumps(matrix_to_json(a)) + "\n")
    else:
        path.write_text(format_matrix_text(a))


def read_vector(path):
    """Whitespace separated reals, or a JSON list when the name ends in .json."""
    text = Path(path).read_text()
    if _is_json(path):
        return np.array([_num(x) for x in json.loads(text)], dtype=float)
    return np.array([float(t) for t in text.split()], dtype=float)


def write_vector(path, v):
    path = Path(path)
    vals = [float(x) for x in np.ravel(v)]
    if _is_json(path):
        path.write_text(json.dumps(vals) + "\n")
    else:
        path.write_text(" ".join(repr(x) for x in vals) + "\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        if math.isfinite(x):
            return x
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def write_json(path, obj):
    Path(path).write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


def to_jsonable(obj):
    return _jsonable(obj)
