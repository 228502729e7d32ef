"""Matrix and triplet exchange formats.

* CSV: row-major, ``.`` decimal separator, one matrix row per line.
  Lines starting with ``#`` are comments.
* GRMAT1: the 6-byte magic ``b"GRMAT1"``, then ``rows`` and ``cols`` as
  little-endian u32, then ``rows * cols`` little-endian float64 in row-major
  order.
* Triplet CSV: ``row,col,value`` per line, with an optional
  ``# shape: ROWS COLS`` comment line.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import InputValidationError

MAGIC = b"GRMAT1"
_HEADER = struct.Struct("<6sII")


def write_grmat(path, M) -> None:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.ndim != 2:
        raise InputValidationError("GRMAT1 holds 2-D matrices only")
    rows, cols = M.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, rows, cols))
        fh.write(np.ascontiguousarray(M, dtype="<f8").tobytes())


def read_grmat(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise InputValidationError(f"{path}: truncated GRMAT1 header")
    magic, rows, cols = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise InputValidationError(f"{path}: bad magic {magic!r}")
    expected = _HEADER.size + 8 * rows * cols
    if len(data) != expected:
        raise InputValidationError(f"{path}: expected {expected} bytes, found {len(data)}")
    return np.frombuffer(data, dtype="<f8", offset=_HEADER.size).reshape(rows, cols).astype(float)


def write_csv(path, M, header: list[str] | None = None) -> None:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    with open(path, "w", newline="\n") as fh:
        for line in header or []:
            fh.write(f"# {line}\n")
        for row in M:
            fh.write(",".join(repr(float(x)) for x in row) + "\n")


def read_csv(path) -> np.ndarray:
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                rows.append([float(tok) for tok in line.split(",")])
            except ValueError as exc:
                raise InputValidationError(f"{path}:{lineno}: {exc}") from None
    if not rows:
        raise InputValidationError(f"{path}: no data rows")
    if len({len(r) for r in rows}) != 1:
        raise InputValidationError(f"{path}: ragged rows")
    return np.array(rows, dtype=float)


def load_matrix(path) -> np.ndarray:
    """Read a matrix from GRMAT1 (sniffed by magic) or CSV."""
    with open(path, "rb") as fh:
        head = fh.read(len(MAGIC))
    return read_grmat(path) if head == MAGIC else read_csv(path)


def save_matrix(path, M) -> None:
    """Write GRMAT1 for ``.grmat``/``.bin`` suffixes and CSV otherwise."""
    if Path(path).suffix.lower() in {".grmat", ".bin"}:
        write_grmat(path, M)
    else:
        write_csv(path, M)


def write_triplets(path, rows, cols, entries, header: list[str] | None = None) -> None:
    """Write ``(row, col, value)`` triplets; ``entries`` is an iterable of 3-tuples."""
    with open(path, "w", newline="\n") as fh:
        for line in header or []:
            fh.write(f"# {line}\n")
        fh.write(f"# shape: {rows} {cols}\n")
        for r, c, v in entries:
            fh.write(f"{int(r)},{int(c)},{float(v)!r}\n")


def read_triplets(path):
    """Return ``(rows, cols, row_idx, col_idx, values)``.

    The shape comes from a ``# shape:`` comment when present, otherwise from
    the largest indices seen.
    """
    shape = None
    r_idx, c_idx, vals = [], [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if body.startswith("shape:"):
                    parts = body.split(":", 1)[1].split()
                    shape = (int(parts[0]), int(parts[1]))
                continue
            toks = line.split(",")
            if len(toks) != 3:
                raise InputValidationError(f"{path}:{lineno}: expected row,col,value")
            try:
                r_idx.append(int(toks[0]))
                c_idx.append(int(toks[1]))
                vals.append(float(toks[2]))
            except ValueError as exc:
                raise InputValidationError(f"{path}:{lineno}: {exc}") from None
    r = np.array(r_idx, dtype=np.intp)
    c = np.array(c_idx, dtype=np.intp)
    if shape is None:
        if r.size == 0:
            raise InputValidationError(f"{path}: no triplets and no shape header")
        shape = (int(r.max()) + 1, int(c.max()) + 1)
    return shape[0], shape[1], r, c, np.array(vals, dtype=float)
