"""CSV reading and writing for vectors, matrices and result tables."""

from __future__ import annotations

import csv
import io
import sys
from contextlib import contextmanager

import numpy as np

from circsense.errors import ConfigurationError


def format_number(v) -> str:
    """17 significant digits for reals, ``a+bj`` for complex values."""
    if isinstance(v, (complex, np.complexfloating)):
        return f"{v.real:.17g}{v.imag:+.17g}j"
    return f"{float(v):.17g}"


def _parse_number(tok: str):
    tok = tok.strip()
    if tok.endswith("j"):
        return complex(tok)
    return float(tok)


@contextmanager
def open_output(path):
    if path in (None, "-"):
        yield sys.stdout
        return
    with open(path, "w", encoding="utf-8", newline="") as fh:
        yield fh


def write_table(path, header, rows, comment: str | None = None):
    """Write an optional ``# comment`` line, the header, then the rows."""
    buf = io.StringIO()
    if comment is not None:
        buf.write(f"# {comment}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    with open_output(path) as fh:
        fh.write(buf.getvalue())


def read_table(path):
    """Rows of a CSV file produced by :func:`write_table` (comments skipped)."""
    with open(path, encoding="utf-8") as fh:
        lines = [line for line in fh if not line.startswith("#")]
    rows = list(csv.reader(lines))
    return rows[0], rows[1:]


def write_matrix(path, a, comment: str | None = None):
    a = np.atleast_2d(np.asarray(a))
    buf = io.StringIO()
    if comment is not None:
        buf.write(f"# {comment}\n")
    for row in a:
        buf.write(",".join(format_number(v) for v in row) + "\n")
    with open_output(path) as fh:
        fh.write(buf.getvalue())


def write_vector(path, v, comment: str | None = None):
    write_matrix(path, np.asarray(v).reshape(1, -1), comment)


def read_matrix(path) -> np.ndarray:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                rows.append([_parse_number(tok) for tok in line.split(",")])
            except ValueError as exc:
                raise ConfigurationError(f"{path}: cannot parse {line!r}: {exc}") from None
    if not rows or len({len(r) for r in rows}) != 1:
        raise ConfigurationError(f"{path}: expected a non-empty rectangular table")
    complex_ = any(isinstance(v, complex) for r in rows for v in r)
    return np.array(rows, dtype=np.complex128 if complex_ else np.float64)


def read_vector(path) -> np.ndarray:
    """A vector stored as one row or as one column."""
    a = read_matrix(path)
    if a.shape[0] != 1 and a.shape[1] != 1:
        raise ConfigurationError(f"{path}: expected a single row or column, got shape {a.shape}")
    return a.reshape(-1)
