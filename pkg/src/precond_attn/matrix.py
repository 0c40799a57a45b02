"""Dense row-major float64 matrix, the carrier type for everything here."""

from __future__ import annotations

import math
from array import array

from .backend import K
from .errors import ShapeError


class Matrix:
    """2-D array of 64-bit floats with a fixed shape.

    `data` is a flat row-major array('d'). The classmethod constructors
    validate user input (rectangular, finite entries); internal code that
    already holds a well-formed buffer calls Matrix(rows, cols, data)
    directly.
    """

    __slots__ = ("rows", "cols", "data")

    def __init__(self, rows: int, cols: int, data: array):
        self.rows = rows
        self.cols = cols
        self.data = data

    @classmethod
    def from_rows(cls, rows) -> "Matrix":
        rows = [list(r) for r in rows]
        if not rows or not rows[0]:
            raise ShapeError("matrix needs at least one row and one column")
        c = len(rows[0])
        for i, r in enumerate(rows):
            if len(r) != c:
                raise ShapeError(f"row {i} has {len(r)} entries, expected {c}")
        flat = array("d", (v for r in rows for v in r))
        _check_finite(flat)
        return cls(len(rows), c, flat)

    @classmethod
    def from_flat(cls, rows: int, cols: int, values) -> "Matrix":
        if rows < 1 or cols < 1:
            raise ShapeError(f"invalid shape {rows}x{cols}")
        flat = array("d", values)
        if len(flat) != rows * cols:
            raise ShapeError(f"got {len(flat)} values for shape {rows}x{cols}")
        _check_finite(flat)
        return cls(rows, cols, flat)

    @classmethod
    def zeros(cls, rows: int, cols: int) -> "Matrix":
        return cls(rows, cols, K.zeros(rows * cols))

    @classmethod
    def full(cls, rows: int, cols: int, value: float) -> "Matrix":
        return cls(rows, cols, array("d", [value] * (rows * cols)))

    @classmethod
    def identity(cls, n: int) -> "Matrix":
        m = cls.zeros(n, n)
        for i in range(n):
            m.data[i * n + i] = 1.0
        return m

    @classmethod
    def diagonal(cls, values) -> "Matrix":
        values = list(values)
        m = cls.zeros(len(values), len(values))
        for i, v in enumerate(values):
            m.data[i * len(values) + i] = v
        return m

    @property
    def shape(self):
        return (self.rows, self.cols)

    def __getitem__(self, ij):
        i, j = ij
        return self.data[i * self.cols + j]

    def row(self, i) -> list:
        return list(self.data[i * self.cols:(i + 1) * self.cols])

    def to_rows(self) -> list:
        return [self.row(i) for i in range(self.rows)]

    def transpose(self) -> "Matrix":
        return Matrix(self.cols, self.rows, K.transpose(self.data, self.rows, self.cols))

    def scaled(self, s: float) -> "Matrix":
        return Matrix(self.rows, self.cols, K.scale(self.data, s))

    def copy(self) -> "Matrix":
        return Matrix(self.rows, self.cols, array("d", self.data))

    def __eq__(self, other):
        if not isinstance(other, Matrix):
            return NotImplemented
        return (self.rows, self.cols) == (other.rows, other.cols) and self.data == other.data

    def __repr__(self):
        return f"Matrix({self.rows}x{self.cols})"


def _check_finite(flat: array):
    for idx, v in enumerate(flat):
        if not math.isfinite(v):
            raise ValueError(f"matrix entries must be finite, got {v!r} at flat index {idx}")
