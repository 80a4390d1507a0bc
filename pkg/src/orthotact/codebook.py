"""Walsh-Hadamard code books and node assignment."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np


class InvalidOrderError(ValueError):
    pass


class CodeBookError(ValueError):
    pass


def is_power_of_two(value: int) -> bool:
    return value > 0 and (value & (value - 1)) == 0


def sylvester_hadamard(order: int) -> np.ndarray:
    """Return the Sylvester Hadamard matrix of the given order as int8 rows.

    H_1 = [1] and H_2N = [[H_N, H_N], [H_N, -H_N]].
    """
    if isinstance(order, bool) or not isinstance(order, (int, np.integer)):
        raise InvalidOrderError(f"order must be an integer, got {order!r}")
    if not is_power_of_two(int(order)):
        raise InvalidOrderError(f"order must be a positive power of 2, got {order}")
    return _sylvester(int(order)).copy()


@lru_cache(maxsize=16)
def _sylvester(order: int) -> np.ndarray:
    h = np.ones((1, 1), dtype=np.int8)
    while h.shape[0] < order:
        h = np.block([[h, h], [h, -h]])
    h.setflags(write=False)
    return h


def smallest_order(n_nodes: int, skip_dc_row: bool = True) -> int:
    """Least power of two that fits ``n_nodes`` codes (one extra when skipping the all-ones row)."""
    if n_nodes < 1:
        raise CodeBookError(f"n_nodes must be >= 1, got {n_nodes}")
    need = n_nodes + 1 if skip_dc_row else n_nodes
    order = 1
    while order < need:
        order *= 2
    return order


def fwht(x: np.ndarray) -> np.ndarray:
    """Fast Walsh-Hadamard transform along the last axis, natural (Sylvester) order.

    Returns ``x @ H.T`` without building H, i.e. entry r is the correlation of
    the input with row r of the Sylvester matrix. Unnormalised.
    """
    y = np.array(x, dtype=float, copy=True)
    n = y.shape[-1]
    if not is_power_of_two(n):
        raise InvalidOrderError(f"transform length must be a power of 2, got {n}")
    lead = y.shape[:-1]
    h = n
    while h > 1:
        y = y.reshape(*lead, n // h, 2, h // 2)
        a = y[..., 0, :]
        b = y[..., 1, :]
        y = np.stack((a + b, a - b), axis=-2)
        h //= 2
    return y.reshape(*lead, n)


@dataclass(frozen=True)
class CodeBook:
    """Immutable set of Hadamard rows with a node -> row assignment."""

    order: int
    assignment: tuple[int, ...]
    skip_dc_row: bool = True
    rows: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        rows = sylvester_hadamard(self.order)
        rows.setflags(write=False)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "assignment", tuple(int(r) for r in self.assignment))
        if len(set(self.assignment)) != len(self.assignment):
            raise CodeBookError("assignment must be injective")
        for r in self.assignment:
            if not 0 <= r < self.order:
                raise CodeBookError(f"row index {r} outside order {self.order}")
        if self.skip_dc_row and 0 in self.assignment:
            raise CodeBookError("all-ones row assigned while skip_dc_row is set")

    @property
    def n_nodes(self) -> int:
        return len(self.assignment)

    def code(self, node_id: int) -> np.ndarray:
        return self.rows[self.assignment[node_id]]

    def codes(self) -> np.ndarray:
        """Assigned code vectors, one row per node."""
        return self.rows[list(self.assignment)]

    @property
    def dc_node(self) -> int | None:
        """Node that owns the all-ones row, if any."""
        try:
            return self.assignment.index(0)
        except ValueError:
            return None

    def to_dict(self) -> dict:
        return {
            "order": self.order,
            "skip_dc_row": self.skip_dc_row,
            "assignment": list(self.assignment),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "CodeBook":
        try:
            book = cls(
                order=int(doc["order"]),
                assignment=tuple(doc["assignment"]),
                skip_dc_row=bool(doc.get("skip_dc_row", True)),
            )
        except KeyError as exc:
            raise CodeBookError(f"codebook document missing field {exc.args[0]!r}") from None
        report = verify_orthogonality(book)
        if not report.ok:
            raise CodeBookError(f"codebook failed orthogonality check: {report}")
        return book

    def save(self, path: str | Path) -> None:
        report = verify_orthogonality(self)
        if not report.ok:
            raise CodeBookError(f"refusing to write non-orthogonal codebook: {report}")
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "CodeBook":
        return cls.from_dict(json.loads(Path(path).read_text()))


def assign_codes(n_nodes: int, skip_dc_row: bool = True) -> CodeBook:
    """Assign rows in ascending index to nodes 0..n-1, starting at row 1 when skipping DC."""
    order = smallest_order(n_nodes, skip_dc_row)
    first = 1 if skip_dc_row else 0
    return CodeBook(order=order, assignment=tuple(range(first, first + n_nodes)), skip_dc_row=skip_dc_row)


@dataclass(frozen=True)
class OrthogonalityReport:
    max_cross_dot: int
    min_self_dot: int
    order: int

    @property
    def ok(self) -> bool:
        return self.max_cross_dot == 0 and self.min_self_dot == self.order


def gram_matrix(chips: np.ndarray) -> np.ndarray:
    """Exact integer Gram matrix of ±1 rows.

    The product is formed in float32/float64 BLAS, which is exact here because
    every partial sum is an integer bounded by the row length.
    """
    chips = np.asarray(chips)
    n = chips.shape[1]
    dtype = np.float32 if n < 2**24 else np.float64
    m = chips.astype(dtype)
    return np.rint(m @ m.T).astype(np.int64)


def verify_orthogonality(book: CodeBook, rows: np.ndarray | None = None) -> OrthogonalityReport:
    """Check pairwise dot products among the assigned rows.

    ``rows`` overrides the book's regenerated matrix (used to check tampered data).
    """
    matrix = book.rows if rows is None else np.asarray(rows)
    chips = matrix[list(book.assignment)]
    if chips.size == 0:
        return OrthogonalityReport(0, book.order, book.order)
    gram = gram_matrix(chips)
    diag = np.diag(gram).copy()
    np.fill_diagonal(gram, 0)
    return OrthogonalityReport(
        max_cross_dot=int(np.abs(gram).max()),
        min_self_dot=int(diag.min()),
        order=book.order,
    )
