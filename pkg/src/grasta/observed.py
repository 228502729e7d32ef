"""Partially observed matrices stored as sorted triplets."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import PartialObservation
from .errors import InputValidationError


@dataclass(frozen=True)
class SparseObservedMatrix:
    """Observed entries of a ``rows x cols`` matrix, sorted by column then row."""

    rows: int
    cols: int
    row_idx: np.ndarray
    col_idx: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.row_idx, dtype=np.intp).reshape(-1)
        c = np.asarray(self.col_idx, dtype=np.intp).reshape(-1)
        v = np.asarray(self.values, dtype=float).reshape(-1)
        if not (r.size == c.size == v.size):
            raise InputValidationError("row, col and value arrays differ in length")
        if r.size and (r.min() < 0 or r.max() >= self.rows or c.min() < 0 or c.max() >= self.cols):
            raise InputValidationError("triplet index out of range")
        order = np.lexsort((r, c))
        r, c, v = r[order], c[order], v[order]
        flat = c * self.rows + r
        if flat.size > 1 and np.any(np.diff(flat) == 0):
            raise InputValidationError("duplicate (row, col) entries")
        starts = np.searchsorted(c, np.arange(self.cols + 1))
        object.__setattr__(self, "row_idx", r)
        object.__setattr__(self, "col_idx", c)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "_starts", starts)

    @classmethod
    def from_dense(cls, M, mask) -> "SparseObservedMatrix":
        M = np.asarray(M, dtype=float)
        mask = np.asarray(mask, dtype=bool)
        if M.shape != mask.shape:
            raise InputValidationError("matrix and mask shapes differ")
        r, c = np.nonzero(mask)
        return cls(M.shape[0], M.shape[1], r, c, M[r, c])

    def __len__(self) -> int:
        return self.values.size

    def column(self, j: int) -> PartialObservation:
        lo, hi = self._starts[j], self._starts[j + 1]
        return PartialObservation(self.row_idx[lo:hi], self.values[lo:hi], self.rows)

    def column_counts(self) -> np.ndarray:
        return np.diff(self._starts)

    def mask(self) -> np.ndarray:
        out = np.zeros((self.rows, self.cols), dtype=bool)
        out[self.row_idx, self.col_idx] = True
        return out

    def triplets(self):
        return zip(self.row_idx.tolist(), self.col_idx.tolist(), self.values.tolist())
