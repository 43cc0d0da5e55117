"""Text formats: sparse triplets, dense matrices, field/state CSV and JSON.

Floats are always written with 17 significant digits so repeated runs are
byte-identical.  Every writer goes through a temp file plus rename.
"""

from __future__ import annotations

import json
import math
import os
import tempfile

import numpy as np
import scipy.sparse as sp

from .grid import DiscreteOperator

STATE_COMPONENTS = ("Qperp", "Q", "P")


class IOShapeError(ValueError):
    pass


def fmt(x: float) -> str:
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def atomic_write(path: str, text: str):
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _json(obj, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None or obj is True or obj is False:
        return {None: "null", True: "true", False: "false"}[obj]
    if isinstance(obj, (int, np.integer)) and not isinstance(obj, bool):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return fmt(x) if math.isfinite(x) else f'"{fmt(x)}"'
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{_json(str(k), indent, level + 1)}: {_json(v, indent, level + 1)}"
                 for k, v in sorted(obj.items(), key=lambda kv: str(kv[0]))]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            return "[]"
        if all(isinstance(v, (int, float, np.integer, np.floating)) for v in seq):
            return "[" + ", ".join(_json(v, indent, level + 1) for v in seq) + "]"
        return "[\n" + ",\n".join(pad + _json(v, indent, level + 1) for v in seq) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj, indent: int = 2) -> str:
    """Deterministic JSON: sorted keys, floats at 17 significant digits."""
    return _json(obj, indent, 0) + "\n"


def write_json(path: str, obj):
    atomic_write(path, dumps(obj))


# -- matrices ----------------------------------------------------------------

def write_triplets(path: str, op):
    mat = op.matrix if isinstance(op, DiscreteOperator) else sp.coo_matrix(op)
    coo = sp.coo_matrix(mat)
    coo.sum_duplicates()
    order = np.lexsort((coo.col, coo.row))
    lines = [f"{coo.shape[0]} {coo.shape[1]} {coo.nnz}"]
    lines += [f"{r} {c} {fmt(v)}" for r, c, v in zip(coo.row[order], coo.col[order], coo.data[order])]
    atomic_write(path, "\n".join(lines) + "\n")


def _tokens(path: str) -> list[list[str]]:
    try:
        with open(path) as fh:
            return [ln.split() for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]
    except OSError as exc:
        raise IOShapeError(f"cannot read {path}: {exc}") from exc


def _looks_like_triplets(rows) -> bool:
    if not rows or len(rows[0]) != 3:
        return False
    try:
        m, n, nnz = (int(t) for t in rows[0])
    except ValueError:
        return False
    return nnz == len(rows) - 1 and all(len(r) == 3 for r in rows[1:]) and m > 0 and n > 0


def read_triplets(path: str) -> sp.csr_matrix:
    rows = _tokens(path)
    if not _looks_like_triplets(rows):
        raise IOShapeError(f"{path}: not a triplet file (header 'rows cols nnz' expected)")
    m, n, _ = (int(t) for t in rows[0])
    try:
        r = np.array([int(x[0]) for x in rows[1:]], dtype=int)
        c = np.array([int(x[1]) for x in rows[1:]], dtype=int)
        v = np.array([float(x[2]) for x in rows[1:]])
    except ValueError as exc:
        raise IOShapeError(f"{path}: malformed triplet line: {exc}") from exc
    if r.size and (r.min() < 0 or r.max() >= m or c.min() < 0 or c.max() >= n):
        raise IOShapeError(f"{path}: index out of range for a {m}x{n} matrix")
    if len(set(zip(r.tolist(), c.tolist()))) != r.size:
        raise IOShapeError(f"{path}: duplicate (row, col) entries")
    return sp.csr_matrix((v, (r, c)), shape=(m, n))


def read_matrix(path: str, fmt_hint: str = "auto") -> np.ndarray:
    """Dense row-major text or triplet file, returned dense."""
    if fmt_hint == "triplet":
        return read_triplets(path).toarray()
    rows = _tokens(path)
    if fmt_hint == "auto" and _looks_like_triplets(rows):
        return read_triplets(path).toarray()
    if not rows:
        raise IOShapeError(f"{path}: empty matrix file")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise IOShapeError(f"{path}: ragged rows {sorted(widths)}")
    try:
        return np.array([[float(t) for t in r] for r in rows])
    except ValueError as exc:
        raise IOShapeError(f"{path}: {exc}") from exc


def read_vector(path: str) -> np.ndarray:
    rows = _tokens(path)
    try:
        return np.array([float(t) for r in rows for t in r])
    except ValueError as exc:
        raise IOShapeError(f"{path}: {exc}") from exc


# -- fields and states --------------------------------------------------------

def write_field_csv(path: str, values):
    lines = ["entity_index,value"] + [f"{i},{fmt(v)}" for i, v in enumerate(np.asarray(values))]
    atomic_write(path, "\n".join(lines) + "\n")


def read_field_csv(path: str, expected: int | None = None) -> np.ndarray:
    rows = _csv_rows(path, ("entity_index", "value"))
    idx = np.array([int(r[0]) for r in rows], dtype=int)
    if not np.array_equal(idx, np.arange(len(rows))):
        raise IOShapeError(f"{path}: entity indices must be 0..n-1 in order")
    vals = np.array([float(r[1]) for r in rows])
    if expected is not None and vals.size != expected:
        raise IOShapeError(f"{path}: {vals.size} entries, the grid has {expected}")
    return vals


def _csv_rows(path: str, header: tuple) -> list[list[str]]:
    try:
        with open(path) as fh:
            lines = [ln.strip() for ln in fh if ln.strip()]
    except OSError as exc:
        raise IOShapeError(f"cannot read {path}: {exc}") from exc
    if not lines or tuple(lines[0].split(",")) != header:
        raise IOShapeError(f"{path}: expected header {','.join(header)}")
    rows = [ln.split(",") for ln in lines[1:]]
    if any(len(r) != len(header) for r in rows):
        raise IOShapeError(f"{path}: wrong column count")
    return rows


def write_state_csv(path: str, state):
    lines = ["component,entity_index,value"]
    for name in STATE_COMPONENTS:
        arr = getattr(state, name)
        if arr is None:
            continue
        lines += [f"{name},{i},{fmt(v)}" for i, v in enumerate(arr)]
    atomic_write(path, "\n".join(lines) + "\n")


def read_state_csv(path: str) -> dict:
    """Component name -> value array (entity indices must be contiguous)."""
    rows = _csv_rows(path, ("component", "entity_index", "value"))
    out: dict[str, list] = {}
    for comp, idx, val in rows:
        if comp not in STATE_COMPONENTS:
            raise IOShapeError(f"{path}: unknown component {comp!r}")
        lst = out.setdefault(comp, [])
        if int(idx) != len(lst):
            raise IOShapeError(f"{path}: {comp} indices not contiguous at {idx}")
        lst.append(float(val))
    return {k: np.array(v) for k, v in out.items()}


def write_table_csv(path: str, header: list[str], rows):
    lines = [",".join(header)]
    for r in rows:
        lines.append(",".join(v if isinstance(v, str) else str(v) if isinstance(v, (int, np.integer))
                              else fmt(v) for v in r))
    atomic_write(path, "\n".join(lines) + "\n")
