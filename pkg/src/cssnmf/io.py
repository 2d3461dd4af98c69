"""CSV readers/writers shared by the command-line tools.

Floats are written with ``repr``, which round-trips exactly, so two runs
producing equal arrays produce byte-identical files.  Line endings are
always ``"\\n"``.
"""

import numpy as np

__all__ = [
    "format_float",
    "save_matrix_csv",
    "load_matrix_csv",
    "save_vector_csv",
    "load_vector_csv",
]


def format_float(v):
    """Shortest decimal string that parses back to exactly ``v``."""
    return repr(float(v))


def _write_rows(path, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for row in rows:
            fh.write(",".join(row))
            fh.write("\n")


def save_matrix_csv(path, X, header=None):
    """Write a dense matrix, one CSV row per matrix row.

    ``header`` is a list of column names (defaults to ``x0..x{m-1}``).
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError(f"expected a matrix, got shape {X.shape}")
    if header is None:
        header = [f"x{j}" for j in range(X.shape[1])]
    if len(header) != X.shape[1]:
        raise ValueError(f"header has {len(header)} names for {X.shape[1]} columns")
    rows = [list(header)]
    rows.extend([format_float(v) for v in row] for row in X)
    _write_rows(path, rows)


def _is_numeric_row(cells):
    try:
        for c in cells:
            float(c)
    except ValueError:
        return False
    return True


def load_matrix_csv(path):
    """Read a matrix CSV; a non-numeric first row is taken as the header.

    Returns ``(X, header)`` with ``header`` None when the file starts with
    data.  A header made entirely of numeric-looking terms would be
    misread; the writers here always emit at least one non-numeric name.
    """
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n").rstrip("\r") for ln in fh if ln.strip()]
    if not lines:
        raise ValueError(f"{path}: empty file")
    first = lines[0].split(",")
    header = None
    start = 0
    if not _is_numeric_row(first):
        header = first
        start = 1
    if start >= len(lines):
        raise ValueError(f"{path}: no data rows")
    data = []
    width = None
    for k, ln in enumerate(lines[start:], start=start + 1):
        cells = ln.split(",")
        if width is None:
            width = len(cells)
        elif len(cells) != width:
            raise ValueError(f"{path}: row {k} has {len(cells)} cells, expected {width}")
        try:
            data.append([float(c) for c in cells])
        except ValueError as err:
            raise ValueError(f"{path}: row {k} is not numeric: {err}") from None
    return np.asarray(data, dtype=float), header


def save_vector_csv(path, y, name="y"):
    """Write a vector as a single-column CSV with a header row."""
    y = np.asarray(y, dtype=float)
    if y.ndim != 1:
        raise ValueError(f"expected a vector, got shape {y.shape}")
    rows = [[name]]
    rows.extend([format_float(v)] for v in y)
    _write_rows(path, rows)


def load_vector_csv(path):
    """Read a one-column CSV (header optional) as a vector."""
    X, _ = load_matrix_csv(path)
    if X.shape[1] != 1:
        raise ValueError(f"{path}: expected one column, found {X.shape[1]}")
    return X[:, 0]
