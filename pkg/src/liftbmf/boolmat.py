"""Dense Boolean matrices over the semiring ({0,1}, or, and).

A BoolMatrix is immutable after construction.  Row and column labels
(constant names) are optional: the pure algebra works without them, the
evidence pipeline in `reduction` requires them.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import InputError

__all__ = [
    "BoolMatrix",
    "FlipCounts",
    "boolean_product",
    "integer_product_entry",
    "hamming_error",
    "flip_counts",
    "read_matrix",
    "write_matrix",
]

_LABEL_RE = re.compile(r"[A-Za-z0-9_]+")


def _check_labels(labels: Sequence[str] | None, n: int, axis: str) -> tuple[str, ...] | None:
    if labels is None:
        return None
    labels = tuple(labels)
    if len(labels) != n:
        raise InputError(f"{axis} labels: expected {n} names, got {len(labels)}")
    if len(set(labels)) != len(labels):
        raise InputError(f"{axis} labels are not unique: {labels}")
    for name in labels:
        if not _LABEL_RE.fullmatch(name):
            raise InputError(f"invalid {axis} label {name!r}")
    return labels


@dataclass(frozen=True, eq=False)
class BoolMatrix:
    """k x l bit matrix with optional row/column labels."""

    bits: np.ndarray
    row_labels: tuple[str, ...] | None = None
    col_labels: tuple[str, ...] | None = None

    def __post_init__(self):
        bits = np.asarray(self.bits)
        if bits.dtype != np.uint8:
            bits = bits.astype(np.uint8)
        if bits.ndim != 2:
            raise InputError(f"matrix must be 2-dimensional, got shape {bits.shape}")
        if bits.size and bits.max() > 1:
            raise InputError("matrix entries must be 0 or 1")
        bits = np.ascontiguousarray(bits)
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)
        object.__setattr__(self, "row_labels", _check_labels(self.row_labels, bits.shape[0], "row"))
        object.__setattr__(self, "col_labels", _check_labels(self.col_labels, bits.shape[1], "col"))

    @property
    def rows(self) -> int:
        return self.bits.shape[0]

    @property
    def cols(self) -> int:
        return self.bits.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.bits.shape

    def ones(self) -> int:
        """Number of 1-entries."""
        return int(self.bits.sum())

    def entry(self, i: int, j: int) -> int:
        k, l = self.shape
        if not (0 <= i < k and 0 <= j < l):
            raise InputError(f"index ({i},{j}) out of range for {k}x{l} matrix")
        return int(self.bits[i, j])

    def with_labels(self, row_labels, col_labels) -> "BoolMatrix":
        return BoolMatrix(self.bits, row_labels, col_labels)

    def __eq__(self, other):
        if not isinstance(other, BoolMatrix):
            return NotImplemented
        return (
            self.shape == other.shape
            and bool(np.array_equal(self.bits, other.bits))
            and self.row_labels == other.row_labels
            and self.col_labels == other.col_labels
        )

    def __repr__(self):
        return f"BoolMatrix({self.rows}x{self.cols}, ones={self.ones()})"

    # --- text format -------------------------------------------------
    #
    # First non-comment line is "k l"; then exactly k lines of l characters
    # from {0,1}.  Lines starting with '#' are comments; '#rows a,b,...' and
    # '#cols ...' carry the labels.

    def to_text(self, comments: Iterable[str] = ()) -> str:
        out = [f"# {c}" for c in comments]
        if self.row_labels is not None:
            out.append("#rows " + ",".join(self.row_labels))
        if self.col_labels is not None:
            out.append("#cols " + ",".join(self.col_labels))
        out.append(f"{self.rows} {self.cols}")
        out.extend("".join(str(b) for b in row) for row in self.bits)
        return "\n".join(out) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "BoolMatrix":
        row_labels = col_labels = None
        dims = None
        data: list[np.ndarray] = []
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                for tag, have in (("#rows", row_labels), ("#cols", col_labels)):
                    if line.startswith(tag + " ") or line == tag:
                        if have is not None:
                            raise InputError(f"line {lineno}: duplicate {tag} header")
                        labels = tuple(p.strip() for p in line[len(tag):].split(",") if p.strip())
                        if tag == "#rows":
                            row_labels = labels
                        else:
                            col_labels = labels
                continue
            if dims is None:
                parts = line.split()
                if len(parts) != 2:
                    raise InputError(f"line {lineno}: expected 'k l', got {line!r}")
                try:
                    dims = (int(parts[0]), int(parts[1]))
                except ValueError:
                    raise InputError(f"line {lineno}: expected two integers, got {line!r}") from None
                if dims[0] < 0 or dims[1] < 0:
                    raise InputError(f"line {lineno}: negative dimensions {dims}")
                continue
            if len(data) >= dims[0]:
                raise InputError(f"line {lineno}: more than {dims[0]} data rows")
            if len(line) != dims[1]:
                raise InputError(
                    f"line {lineno}: expected {dims[1]} characters, got {len(line)}"
                )
            if set(line) - {"0", "1"}:
                raise InputError(f"line {lineno}: entries must be 0 or 1, got {line!r}")
            data.append(np.frombuffer(line.encode(), dtype=np.uint8) - ord("0"))
        if dims is None:
            raise InputError("missing 'k l' dimension line")
        if len(data) != dims[0]:
            raise InputError(f"expected {dims[0]} data rows, got {len(data)}")
        bits = np.array(data, dtype=np.uint8).reshape(dims)
        return cls(bits, row_labels, col_labels)


class FlipCounts(NamedTuple):
    total: int
    ones_to_zeros: int
    zeros_to_ones: int


def _check_common_cols(q: BoolMatrix, r: BoolMatrix) -> None:
    if q.cols != r.cols:
        raise InputError(
            f"factor column counts differ: {q.rows}x{q.cols} vs {r.rows}x{r.cols}"
        )


def boolean_product(q: BoolMatrix, r: BoolMatrix) -> BoolMatrix:
    """Boolean product Q R^T of a k x n and an l x n matrix.

    Entry (i, j) is OR over shared columns of Q[i][c] AND R[j][c], i.e. 1
    exactly when the integer product entry is >= 1.
    """
    _check_common_cols(q, r)
    prod = (q.bits.astype(np.int64) @ r.bits.T.astype(np.int64)) >= 1
    return BoolMatrix(prod.astype(np.uint8), q.row_labels, r.row_labels)


def integer_product_entry(q: BoolMatrix, r: BoolMatrix, i: int, j: int) -> int:
    """Entry (i, j) of Q R^T computed over the integers, not the Booleans.

    Diagnostic for the gap between Boolean and real-valued factorizations.
    """
    _check_common_cols(q, r)
    if not 0 <= i < q.rows:
        raise InputError(f"row index {i} out of range for {q.rows}x{q.cols} factor")
    if not 0 <= j < r.rows:
        raise InputError(f"row index {j} out of range for {r.rows}x{r.cols} factor")
    return int(q.bits[i].astype(np.int64) @ r.bits[j].astype(np.int64))


def _check_same_shape(p: BoolMatrix, a: BoolMatrix) -> None:
    if p.shape != a.shape:
        raise InputError(f"shape mismatch: {p.rows}x{p.cols} vs {a.rows}x{a.cols}")


def hamming_error(p: BoolMatrix, a: BoolMatrix) -> int:
    """Number of positions where the two matrices differ."""
    _check_same_shape(p, a)
    return int((p.bits != a.bits).sum())


def flip_counts(p: BoolMatrix, a: BoolMatrix) -> FlipCounts:
    """Hamming error split by direction, treating `p` as the original."""
    _check_same_shape(p, a)
    one_to_zero = int(((p.bits == 1) & (a.bits == 0)).sum())
    zero_to_one = int(((p.bits == 0) & (a.bits == 1)).sum())
    return FlipCounts(one_to_zero + zero_to_one, one_to_zero, zero_to_one)


def read_matrix(path) -> BoolMatrix:
    with open(path, encoding="utf-8") as fh:
        return BoolMatrix.from_text(fh.read())


def write_matrix(matrix: BoolMatrix, path, comments: Iterable[str] = ()) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(matrix.to_text(comments))
