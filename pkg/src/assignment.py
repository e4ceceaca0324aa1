import itertools
import logging
import math
from dataclasses import dataclass
from typing import Hashable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment

from .exceptions import NonFiniteSimilarity, ShapeMismatch

logger = logging.getLogger(__name__)

# Entries equal to FORBIDDEN are never paired (class gating, IoU gating).
FORBIDDEN = -math.inf

# Slack when comparing the totals of two candidate optima.
_TIE_TOLERANCE = 1e-9


@dataclass(frozen=True)
class SimilarityMatrix:
    """M x N similarities, rows/cols identified by opaque keys. Higher is better."""

    values: np.ndarray
    row_keys: Tuple[Hashable, ...]
    col_keys: Tuple[Hashable, ...]

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.size == 0:
            values = values.reshape(len(self.row_keys), len(self.col_keys))
        if values.shape != (len(self.row_keys), len(self.col_keys)):
            raise ShapeMismatch(
                f"Matrix shape {values.shape} does not match keys "
                f"({len(self.row_keys)}, {len(self.col_keys)})"
            )
        if np.isnan(values).any() or np.isposinf(values).any():
            raise NonFiniteSimilarity()
        object.__setattr__(self, "values", values)

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[float]], row_keys=None, col_keys=None) -> "SimilarityMatrix":
        values = np.asarray(rows, dtype=np.float64)
        if values.ndim != 2:
            values = values.reshape(len(row_keys or ()), len(col_keys or ()))
        m, n = values.shape
        return cls(
            values=values,
            row_keys=tuple(row_keys) if row_keys is not None else tuple(f"r{i}" for i in range(m)),
            col_keys=tuple(col_keys) if col_keys is not None else tuple(f"c{j}" for j in range(n)),
        )

    @property
    def shape(self) -> Tuple[int, int]:
        return len(self.row_keys), len(self.col_keys)

    @property
    def size(self) -> int:
        m, n = self.shape
        return m * n


@dataclass(frozen=True)
class Assignment:
    pairs: Tuple[Tuple[Hashable, Hashable, float], ...] = ()
    unmatched_rows: Tuple[Hashable, ...] = ()
    unmatched_cols: Tuple[Hashable, ...] = ()

    @property
    def total(self) -> float:
        return math.fsum(sim for _, _, sim in self.pairs)

    def as_dict(self) -> dict:
        return {row: col for row, col, _ in self.pairs}


def _score(values: np.ndarray, pairs) -> Tuple[int, float]:
    """Rank key for an assignment: number of allowed pairs, then their total."""
    allowed = [values[r, c] for r, c in pairs if values[r, c] != FORBIDDEN]
    return len(allowed), math.fsum(allowed)


def _ties(a: Tuple[int, float], b: Tuple[int, float]) -> bool:
    if a[0] != b[0]:
        return False
    scale = max(1.0, abs(a[1]), abs(b[1]))
    return abs(a[1] - b[1]) <= _TIE_TOLERANCE * scale


def _solve(values: np.ndarray, rows: List[int], cols: List[int]) -> List[Tuple[int, int]]:
    """Optimal pairs over the sub-matrix rows x cols, forbidden pairs dropped."""
    if not rows or not cols:
        return []
    sub = values[np.ix_(rows, cols)]
    finite = sub[sub != FORBIDDEN]
    # A forbidden pair costs more than any swing in the finite total.
    penalty = 2.0 * min(len(rows), len(cols)) * (np.abs(finite).max() if finite.size else 0.0) + 1.0
    cost = np.where(sub == FORBIDDEN, penalty, -sub)
    row_ind, col_ind = linear_sum_assignment(cost)
    return [
        (rows[r], cols[c])
        for r, c in zip(row_ind, col_ind)
        if sub[r, c] != FORBIDDEN
    ]


def _build(matrix: SimilarityMatrix, pairs: List[Tuple[int, int]]) -> Assignment:
    pairs = sorted(pairs)
    matched_rows = {r for r, _ in pairs}
    matched_cols = {c for _, c in pairs}
    return Assignment(
        pairs=tuple(
            (matrix.row_keys[r], matrix.col_keys[c], float(matrix.values[r, c])) for r, c in pairs
        ),
        unmatched_rows=tuple(k for i, k in enumerate(matrix.row_keys) if i not in matched_rows),
        unmatched_cols=tuple(k for j, k in enumerate(matrix.col_keys) if j not in matched_cols),
    )


def hungarian_max(matrix: SimilarityMatrix) -> Assignment:
    """Maximum-similarity one-to-one assignment.

    Among optimal assignments the one whose row-by-row column sequence is
    lexicographically smallest is returned (an unmatched row sorts after
    every column).
    """
    values = matrix.values
    m, n = matrix.shape
    if m == 0 or n == 0:
        return _build(matrix, [])

    best = _score(values, _solve(values, list(range(m)), list(range(n))))

    fixed: List[Tuple[int, int]] = []
    free_cols = list(range(n))
    open_rows = list(range(m))
    for r in range(m):
        open_rows.remove(r)
        current = dict(_solve(values, [r] + open_rows, free_cols))
        chosen = current.get(r)
        for c in free_cols:
            if chosen is not None and c >= chosen:
                break
            if values[r, c] == FORBIDDEN:
                continue
            rest = [col for col in free_cols if col != c]
            candidate = fixed + [(r, c)] + _solve(values, open_rows, rest)
            if _ties(_score(values, candidate), best):
                chosen = c
                break
        if chosen is None:
            # r stays unmatched only if dropping it keeps the optimum
            continue
        fixed.append((r, chosen))
        free_cols.remove(chosen)

    return _build(matrix, fixed)


def threshold_filter(assignment: Assignment, alpha: float) -> Assignment:
    """Drop pairs whose similarity is not strictly above alpha."""
    kept = tuple(p for p in assignment.pairs if p[2] > alpha)
    dropped = [p for p in assignment.pairs if not p[2] > alpha]
    if dropped:
        logger.debug(f"Threshold {alpha} rejected {len(dropped)} of {len(assignment.pairs)} pairs")
    return Assignment(
        pairs=kept,
        unmatched_rows=assignment.unmatched_rows + tuple(p[0] for p in dropped),
        unmatched_cols=assignment.unmatched_cols + tuple(p[1] for p in dropped),
    )


def exhaustive_max(matrix: SimilarityMatrix) -> Assignment:
    """Brute-force oracle over every injective row->col map. Small matrices only."""
    values = matrix.values
    m, n = matrix.shape
    best_pairs: Optional[List[Tuple[int, int]]] = None
    best_key = None
    k = min(m, n)
    for rows in itertools.combinations(range(m), k):
        for cols in itertools.permutations(range(n), k):
            pairs = [(r, c) for r, c in zip(rows, cols) if values[r, c] != FORBIDDEN]
            score = _score(values, pairs)
            if best_key is None or score[0] > best_key[0] or (
                score[0] == best_key[0] and score[1] > best_key[1] and not _ties(score, best_key)
            ):
                best_key, best_pairs = score, pairs
            elif _ties(score, best_key) and _lex_key(pairs, m, n) < _lex_key(best_pairs, m, n):
                best_key, best_pairs = score, pairs
    return _build(matrix, best_pairs or [])


def _lex_key(pairs, m: int, n: int) -> Tuple[int, ...]:
    cols = dict(pairs)
    return tuple(cols.get(r, n) for r in range(m))
