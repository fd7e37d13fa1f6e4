"""Boolean matrix factorization: exact rank at oracle scale, greedy otherwise.

The exact solver covers the 1-entries of the matrix with maximal all-ones
rectangles (formal concepts) using branch-and-bound set cover; by
construction no rectangle touches a 0-entry, so a minimum cover is a
minimum exact factorization.  The greedy solver follows the ASSO scheme:
candidate column patterns come from thresholded association confidences,
and each round keeps the candidate whose best per-row companion maximizes
a weighted cover gain.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .boolmat import BoolMatrix, _check_labels, boolean_product, hamming_error
from .errors import CapacityError, InputError, SearchBudgetError

__all__ = [
    "AssoParams",
    "Factorization",
    "exact_boolean_rank",
    "asso_factorize",
    "truncate",
    "optimal_error_at_rank",
    "real_rank",
    "read_factorization",
    "write_factorization",
]

DEFAULT_SIZE_CAP = 400
DEFAULT_MAX_SEARCH = 2_000_000


@dataclass(frozen=True)
class AssoParams:
    """Knobs of the greedy factorizer.

    tau is the association threshold, w_plus rewards covering a 1,
    w_minus penalizes covering a 0.  max_rank of None means min(k, l).
    """

    tau: float = 0.7
    w_plus: float = 1.0
    w_minus: float = 1.0
    max_rank: int | None = None

    def __post_init__(self):
        if not 0.0 < self.tau <= 1.0:
            raise InputError(f"tau must be in (0, 1], got {self.tau}")
        if self.w_plus <= 0:
            raise InputError(f"w_plus must be positive, got {self.w_plus}")
        if self.w_minus < 0:
            raise InputError(f"w_minus must be nonnegative, got {self.w_minus}")
        if self.max_rank is not None and self.max_rank < 0:
            raise InputError(f"max_rank must be nonnegative, got {self.max_rank}")


def _as_vector(v, n: int, what: str) -> np.ndarray:
    vec = np.asarray(v, dtype=np.uint8)
    if vec.shape != (n,):
        raise InputError(f"{what} must have length {n}, got shape {vec.shape}")
    if vec.size and vec.max() > 1:
        raise InputError(f"{what} entries must be 0 or 1")
    vec = np.ascontiguousarray(vec)
    vec.setflags(write=False)
    return vec


@dataclass(frozen=True, eq=False)
class Factorization:
    """Ordered (q_i, r_i) column pairs approximating a k x l target.

    `error` is the Hamming distance between the target and the Boolean
    product of the assembled factors; it is None for factorizations parsed
    from files without their target.
    """

    pairs: tuple[tuple[np.ndarray, np.ndarray], ...]
    shape: tuple[int, int]
    row_labels: tuple[str, ...] | None = None
    col_labels: tuple[str, ...] | None = None
    error: int | None = None
    target: BoolMatrix | None = field(default=None, repr=False)

    def __post_init__(self):
        k, l = self.shape
        if k < 0 or l < 0:
            raise InputError(f"invalid target shape {self.shape}")
        checked = tuple(
            (_as_vector(q, k, "q vector"), _as_vector(r, l, "r vector"))
            for q, r in self.pairs
        )
        object.__setattr__(self, "pairs", checked)
        if len(checked) > min(k, l):
            raise InputError(
                f"rank {len(checked)} exceeds min{self.shape} = {min(k, l)}"
            )
        object.__setattr__(self, "row_labels", _check_labels(self.row_labels, k, "row"))
        object.__setattr__(self, "col_labels", _check_labels(self.col_labels, l, "col"))
        if self.target is not None and self.target.shape != self.shape:
            raise InputError(
                f"target shape {self.target.shape} does not match {self.shape}"
            )

    def rank(self) -> int:
        return len(self.pairs)

    def q_matrix(self) -> BoolMatrix:
        k, _ = self.shape
        cols = [q for q, _ in self.pairs]
        bits = np.stack(cols, axis=1) if cols else np.zeros((k, 0), dtype=np.uint8)
        return BoolMatrix(bits, self.row_labels, None)

    def r_matrix(self) -> BoolMatrix:
        _, l = self.shape
        cols = [r for _, r in self.pairs]
        bits = np.stack(cols, axis=1) if cols else np.zeros((l, 0), dtype=np.uint8)
        return BoolMatrix(bits, self.col_labels, None)

    def reconstruct(self) -> BoolMatrix:
        """Boolean product of the assembled factors."""
        return boolean_product(self.q_matrix(), self.r_matrix())

    def with_target(self, target: BoolMatrix) -> "Factorization":
        """Attach the matrix being approximated and recompute the error."""
        if target.shape != self.shape:
            raise InputError(f"target shape {target.shape} does not match {self.shape}")
        err = hamming_error(target, self.reconstruct())
        return Factorization(
            self.pairs, self.shape, self.row_labels, self.col_labels, err, target
        )

    def flip_cells(self) -> list[tuple[int, int, str]]:
        """Locations where the reconstruction disagrees with the target.

        Each entry is (row, col, direction) with direction '1->0' or '0->1'.
        """
        if self.target is None:
            raise InputError("factorization has no target attached")
        recon = self.reconstruct().bits
        cells = []
        for i, j in zip(*np.nonzero(self.target.bits != recon)):
            direction = "1->0" if self.target.bits[i, j] else "0->1"
            cells.append((int(i), int(j), direction))
        return cells

    def __eq__(self, other):
        if not isinstance(other, Factorization):
            return NotImplemented
        return (
            self.shape == other.shape
            and len(self.pairs) == len(other.pairs)
            and all(
                np.array_equal(q1, q2) and np.array_equal(r1, r2)
                for (q1, r1), (q2, r2) in zip(self.pairs, other.pairs)
            )
            and self.row_labels == other.row_labels
            and self.col_labels == other.col_labels
            and self.error == other.error
        )

    # --- text format -------------------------------------------------
    #
    # "n k l error" then n blocks of two lines: q as k chars, r as l chars.
    # Labels, when present, ride along as #rows/#cols comment headers so a
    # factorization file alone can feed the evidence reduction.

    def to_text(self) -> str:
        if self.error is None:
            raise InputError("cannot serialize a factorization with unknown error")
        out = []
        if self.row_labels is not None:
            out.append("#rows " + ",".join(self.row_labels))
        if self.col_labels is not None:
            out.append("#cols " + ",".join(self.col_labels))
        out.append(f"{self.rank()} {self.shape[0]} {self.shape[1]} {self.error}")
        for q, r in self.pairs:
            out.append("".join(str(b) for b in q))
            out.append("".join(str(b) for b in r))
        return "\n".join(out) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Factorization":
        row_labels = col_labels = None
        header = None
        body: list[str] = []
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                if line.startswith("#rows "):
                    row_labels = tuple(p.strip() for p in line[6:].split(","))
                elif line.startswith("#cols "):
                    col_labels = tuple(p.strip() for p in line[6:].split(","))
                continue
            if header is None:
                parts = line.split()
                if len(parts) != 4:
                    raise InputError(f"line {lineno}: expected 'n k l error'")
                try:
                    header = tuple(int(p) for p in parts)
                except ValueError:
                    raise InputError(f"line {lineno}: expected four integers") from None
                continue
            body.append(line)
        if header is None:
            raise InputError("missing 'n k l error' header line")
        n, k, l, error = header
        if len(body) != 2 * n:
            raise InputError(f"expected {2 * n} vector lines, got {len(body)}")
        pairs = []
        for i in range(n):
            qline, rline = body[2 * i], body[2 * i + 1]
            if len(qline) != k or set(qline) - {"0", "1"}:
                raise InputError(f"pair {i + 1}: q vector must be {k} chars of 0/1")
            if len(rline) != l or set(rline) - {"0", "1"}:
                raise InputError(f"pair {i + 1}: r vector must be {l} chars of 0/1")
            pairs.append(
                (np.array([int(c) for c in qline], dtype=np.uint8),
                 np.array([int(c) for c in rline], dtype=np.uint8))
            )
        return cls(tuple(pairs), (k, l), row_labels, col_labels, error)


def truncate(f: Factorization, n: int) -> Factorization:
    """Keep the first n pairs; the error is recomputed against the target."""
    if n > f.rank():
        raise InputError(f"cannot truncate rank-{f.rank()} factorization to {n}")
    if n == f.rank():
        return f
    if f.target is None:
        raise InputError("truncation needs the target attached to recompute error")
    kept = Factorization(f.pairs[:n], f.shape, f.row_labels, f.col_labels)
    return kept.with_target(f.target)


def read_factorization(path) -> Factorization:
    with open(path, encoding="utf-8") as fh:
        return Factorization.from_text(fh.read())


def write_factorization(f: Factorization, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f.to_text())


# --- exact Boolean rank ------------------------------------------------


def _concepts(p: BoolMatrix, budget: list[int]) -> list[tuple[int, int]]:
    """All maximal all-ones rectangles, as (row bitmask, column bitmask).

    Enumerated as closures of column subsets; `budget` is a one-element
    mutable node counter shared with the cover search.
    """
    k, l = p.shape
    row_cols = [int("".join(str(b) for b in reversed(p.bits[i])), 2) if p.bits[i].any() else 0
                for i in range(k)]
    col_rows = [0] * l
    for i in range(k):
        for j in range(l):
            if p.bits[i, j]:
                col_rows[j] |= 1 << i

    def rows_of(col_mask: int) -> int:
        rows = (1 << k) - 1
        m = col_mask
        while m:
            j = (m & -m).bit_length() - 1
            rows &= col_rows[j]
            m &= m - 1
        return rows

    def cols_of(row_mask: int) -> int:
        cols = (1 << l) - 1
        m = row_mask
        while m:
            i = (m & -m).bit_length() - 1
            cols &= row_cols[i]
            m &= m - 1
        return cols

    seen: dict[int, int] = {}
    queue: list[int] = []
    for j in range(l):
        budget[0] -= 1
        if budget[0] < 0:
            raise SearchBudgetError("concept enumeration exceeded the search budget")
        rows = col_rows[j]
        if not rows:
            continue
        closed = cols_of(rows)
        if closed not in seen:
            seen[closed] = rows
            queue.append(closed)
    head = 0
    while head < len(queue):
        b = queue[head]
        head += 1
        rows = seen[b]
        for j in range(l):
            if b >> j & 1:
                continue
            budget[0] -= 1
            if budget[0] < 0:
                raise SearchBudgetError("concept enumeration exceeded the search budget")
            rows2 = rows & col_rows[j]
            if not rows2:
                continue
            closed = cols_of(rows2)
            if closed not in seen:
                seen[closed] = rows2
                queue.append(closed)
    return [(rows, b) for b, rows in seen.items()]


def _rect_cells(rows: int, cols: int, l: int) -> int:
    """Bitmask over flat cell positions i*l+j of the rectangle rows x cols."""
    cells = 0
    m = rows
    while m:
        i = (m & -m).bit_length() - 1
        cells |= cols << (i * l)
        m &= m - 1
    return cells


def exact_boolean_rank(
    p: BoolMatrix,
    max_search: int = DEFAULT_MAX_SEARCH,
    size_cap: int = DEFAULT_SIZE_CAP,
) -> tuple[int, Factorization]:
    """Smallest n such that p factors exactly into n Boolean outer products.

    Refuses matrices with more than `size_cap` entries; raises
    SearchBudgetError with the bounds proven so far if the branch-and-bound
    cover search expands more than `max_search` nodes.
    """
    k, l = p.shape
    if k == 0 or l == 0:
        raise InputError("matrix must be nonempty")
    if k * l > size_cap:
        raise CapacityError(
            f"{k}x{l} matrix exceeds the exact-rank cap of {size_cap} entries; "
            "use approximate factorization (asso_factorize)"
        )

    empty = Factorization((), (k, l), p.row_labels, p.col_labels).with_target(p)
    ones_mask = 0
    for i in range(k):
        for j in range(l):
            if p.bits[i, j]:
                ones_mask |= 1 << (i * l + j)
    if ones_mask == 0:
        return 0, empty

    budget = [max_search]
    rects = _concepts(p, budget)
    covers = [(_rect_cells(rows, cols, l), rows, cols) for rows, cols in rects]
    # canonical order: biggest coverage first, then by masks, for determinism
    covers.sort(key=lambda t: (-t[0].bit_count(), t[1], t[2]))
    cell_list = [b for b in range(k * l) if ones_mask >> b & 1]
    covering: dict[int, list[int]] = {b: [] for b in cell_list}
    for idx, (cells, _, _) in enumerate(covers):
        m = cells
        while m:
            b = (m & -m).bit_length() - 1
            covering[b].append(idx)
            m &= m - 1
    max_cover = max(c[0].bit_count() for c in covers)

    # greedy cover gives the initial upper bound (and a feasible witness)
    best: list[int] = []
    uncovered = ones_mask
    while uncovered:
        pick = max(range(len(covers)), key=lambda i: (covers[i][0] & uncovered).bit_count())
        best.append(pick)
        uncovered &= ~covers[pick][0]
    best_len = len(best)

    chosen: list[int] = []
    memo: dict[int, int] = {}

    def search(uncovered: int, depth: int) -> None:
        nonlocal best, best_len
        budget[0] -= 1
        if budget[0] < 0:
            lb = math.ceil(ones_mask.bit_count() / max_cover)
            raise SearchBudgetError(
                f"exact rank search exceeded {max_search} nodes; "
                f"best bounds so far: {lb} <= rank <= {best_len}",
                lower_bound=lb,
                upper_bound=best_len,
            )
        if not uncovered:
            if depth < best_len:
                best = list(chosen)
                best_len = depth
            return
        if depth + math.ceil(uncovered.bit_count() / max_cover) >= best_len:
            return
        prev = memo.get(uncovered)
        if prev is not None and prev <= depth:
            return
        memo[uncovered] = depth
        # branch on the uncovered cell with the fewest covering rectangles
        pick_cell = None
        pick_count = None
        m = uncovered
        while m:
            b = (m & -m).bit_length() - 1
            c = len(covering[b])
            if pick_count is None or c < pick_count:
                pick_cell, pick_count = b, c
                if c == 1:
                    break
            m &= m - 1
        options = sorted(
            covering[pick_cell],
            key=lambda i: -(covers[i][0] & uncovered).bit_count(),
        )
        for idx in options:
            chosen.append(idx)
            search(uncovered & ~covers[idx][0], depth + 1)
            chosen.pop()

    search(ones_mask, 0)

    picked = sorted(best, key=lambda i: (covers[i][1], covers[i][2]))
    pairs = []
    for idx in picked:
        _, rows, cols = covers[idx]
        q = np.array([(rows >> i) & 1 for i in range(k)], dtype=np.uint8)
        r = np.array([(cols >> j) & 1 for j in range(l)], dtype=np.uint8)
        pairs.append((q, r))
    witness = Factorization(
        tuple(pairs), (k, l), p.row_labels, p.col_labels
    ).with_target(p)
    assert witness.error == 0
    return len(pairs), witness


# --- greedy (ASSO-style) approximate factorization -----------------------


def asso_factorize(p: BoolMatrix, params: AssoParams | None = None) -> Factorization:
    """Greedy rank-bounded factorization; stops early when no pair helps.

    Candidate column patterns are thresholded association confidences
    between columns; the companion row pattern is chosen row by row so a
    row joins only if it strictly improves the weighted cover gain.  Ties
    among candidates break toward the lowest candidate index, so the output
    is deterministic.
    """
    params = params or AssoParams()
    k, l = p.shape
    max_rank = min(k, l) if params.max_rank is None else min(params.max_rank, min(k, l))
    bits = p.bits.astype(np.int64)
    norms = bits.sum(axis=0)
    keep = norms > 0
    if not keep.any() or max_rank == 0:
        return Factorization((), (k, l), p.row_labels, p.col_labels).with_target(p)
    overlap = bits.T @ bits
    cand = (overlap[keep] / norms[keep, None] >= params.tau).astype(np.uint8)

    covered = np.zeros((k, l), dtype=np.uint8)
    pairs: list[tuple[np.ndarray, np.ndarray]] = []
    for _ in range(max_rank):
        open_cells = 1 - covered
        new_ones = (bits * open_cells) @ cand.T
        new_zeros = ((1 - bits) * open_cells) @ cand.T
        delta = params.w_plus * new_ones - params.w_minus * new_zeros
        gains = np.clip(delta, 0.0, None).sum(axis=0)
        pick = int(np.argmax(gains))
        if gains[pick] <= 0.0:
            break
        q = (delta[:, pick] > 0.0).astype(np.uint8)
        r = cand[pick].copy()
        pairs.append((q, r))
        covered |= np.outer(q, r)
    return Factorization(
        tuple(pairs), (k, l), p.row_labels, p.col_labels
    ).with_target(p)


# --- exhaustive oracle and real rank -------------------------------------


def optimal_error_at_rank(p: BoolMatrix, rank: int, work_cap: int = 50_000_000) -> int:
    """Minimum Hamming error of any rank-`rank` factorization, by brute force.

    Enumerates every choice of `rank` distinct nonzero row patterns for the
    Q side; for a fixed Q the best R follows column by column from the
    OR-closure of the chosen patterns.  Independent of both solvers above,
    so it can referee them.  Refuses work beyond `work_cap` elementary
    comparisons.
    """
    k, l = p.shape
    if rank < 0:
        raise InputError(f"rank must be nonnegative, got {rank}")
    if rank == 0:
        return p.ones()
    if k > 20:
        raise CapacityError(f"exhaustive oracle supports at most 20 rows, got {k}")
    n_patterns = (1 << k) - 1
    rank = min(rank, min(k, l))
    n_combos = math.comb(n_patterns, rank)
    work = n_combos * (1 << rank) * l
    if work > work_cap:
        raise CapacityError(
            f"exhaustive search at rank {rank} needs ~{work} comparisons "
            f"(cap {work_cap})"
        )

    pop = np.zeros(1 << k, dtype=np.int64)
    for i in range(1, 1 << k):
        pop[i] = pop[i >> 1] + (i & 1)
    col_ints = np.array(
        [int("".join(str(b) for b in reversed(p.bits[:, j])), 2) for j in range(l)],
        dtype=np.int64,
    )

    best = p.ones()
    chunk = 200_000
    combos_iter = itertools.combinations(range(1, 1 << k), rank)
    while True:
        block = list(itertools.islice(combos_iter, chunk))
        if not block:
            break
        qs = np.array(block, dtype=np.int64)  # (C, rank)
        base = pop[col_ints][None, :]  # leave column uncovered
        err = np.broadcast_to(base, (qs.shape[0], l)).copy()
        for subset in range(1, 1 << rank):
            union = np.zeros(qs.shape[0], dtype=np.int64)
            for b in range(rank):
                if subset >> b & 1:
                    union |= qs[:, b]
            np.minimum(err, pop[union[:, None] ^ col_ints[None, :]], out=err)
        best = min(best, int(err.sum(axis=1).min()))
        if best == 0:
            break
    return best


def real_rank(p: BoolMatrix) -> int:
    """Rank over the rationals, by fraction-free (Bareiss) elimination."""
    a = [[int(x) for x in row] for row in p.bits]
    k = len(a)
    l = len(a[0]) if k else 0
    rank = 0
    prev = 1
    row = 0
    for col in range(l):
        pivot = next((r for r in range(row, k) if a[r][col] != 0), None)
        if pivot is None:
            continue
        a[row], a[pivot] = a[pivot], a[row]
        for r in range(row + 1, k):
            for c in range(col + 1, l):
                a[r][c] = (a[row][col] * a[r][c] - a[r][col] * a[row][c]) // prev
            a[r][col] = 0
        prev = a[row][col]
        row += 1
        rank += 1
        if row == k:
            break
    return rank
