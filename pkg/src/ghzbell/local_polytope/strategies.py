"""Deterministic local strategies and the vertex matrices built from them.

Party ``k`` following strategy ``lam in {0, 1, 2, 3}`` answers setting ``s``
with outcome ``(-1)**b_s`` where ``lam = b_0 + 2 b_1``.  A joint strategy is
indexed by ``sum_k lam_k 4**k``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .. import _indexing as ix
from ..exceptions import ResourceLimitError, UsageError

STRATEGY_LIMIT = 8

# Per-party correlation factor: rows are ternary digits (absent, s=0, s=1).
CORRELATION_FACTOR = np.array(
    [[1.0, 1.0, 1.0, 1.0], [1.0, -1.0, 1.0, -1.0], [1.0, 1.0, -1.0, -1.0]]
)


def _probability_factor() -> np.ndarray:
    """Rows (s, o) -> 2 s + o with o = 1 meaning outcome -1; columns are strategies."""
    out = np.zeros((4, 4))
    for lam in range(4):
        for s in range(2):
            out[2 * s + ((lam >> s) & 1), lam] = 1.0
    return out


PROBABILITY_FACTOR = _probability_factor()


@dataclass(frozen=True)
class DeterministicStrategy:
    """Outcomes ``(o_{s=0}, o_{s=1})`` in {-1, +1} for every party."""

    outcomes: tuple[tuple[int, int], ...]

    def __post_init__(self):
        if any(len(pair) != 2 or any(o not in (-1, 1) for o in pair) for pair in self.outcomes):
            raise UsageError("outcomes must be pairs of +1/-1")

    @classmethod
    def from_index(cls, index: int, n_parties: int) -> "DeterministicStrategy":
        pairs = []
        for k in range(n_parties):
            lam = (index >> (2 * k)) & 3
            pairs.append((1 - 2 * (lam & 1), 1 - 2 * (lam >> 1)))
        return cls(tuple(pairs))

    @property
    def n_parties(self) -> int:
        return len(self.outcomes)

    @property
    def index(self) -> int:
        return sum((((1 - o0) // 2) + 2 * ((1 - o1) // 2)) << (2 * k) for k, (o0, o1) in enumerate(self.outcomes))

    def probability_table(self) -> np.ndarray:
        """0/1 table p[s, o] in the setting/outcome integer layout."""
        n = self.n_parties
        bits = ix.setting_bits(n)
        table = np.zeros((2**n, 2**n))
        for s in range(2**n):
            o = sum(((1 - self.outcomes[k][bits[s, k]]) // 2) << k for k in range(n))
            table[s, o] = 1.0
        return table

    def correlation_tensor(self) -> np.ndarray:
        return correlation_operator(self.n_parties).columns(np.array([self.index]))[:, 0]


def enumerate_strategies(n_parties: int) -> list[DeterministicStrategy]:
    if n_parties < 1:
        raise UsageError("n_parties must be positive")
    if n_parties > STRATEGY_LIMIT:
        raise ResourceLimitError(f"N = {n_parties} exceeds the strategy limit {STRATEGY_LIMIT}")
    return [DeterministicStrategy.from_index(v, n_parties) for v in range(4**n_parties)]


class KronOperator:
    """Vertex matrix ``M = F (x) ... (x) F`` (party 0 least significant), never formed densely.

    ``extra_ones_row`` appends a row of ones (the normalization of the weights).
    ``rows``/``cols`` restrict to a subset of rows and columns.
    """

    def __init__(self, factor: np.ndarray, n_parties: int, extra_ones_row: bool = False, rows=None, cols=None):
        self.factor = np.asarray(factor, dtype=float)
        self.n_parties = n_parties
        self.extra_ones_row = extra_ones_row
        r, c = self.factor.shape
        self.full_rows = r**n_parties
        self.full_cols = c**n_parties
        self.rows = None if rows is None else np.asarray(rows)
        self.cols = None if cols is None else np.asarray(cols)
        n_rows = self.full_rows if rows is None else len(self.rows)
        self.shape = (n_rows + int(extra_ones_row), self.full_cols if cols is None else len(self.cols))

    def _expand_rows(self, y: np.ndarray) -> tuple[np.ndarray, float]:
        extra = 0.0
        if self.extra_ones_row:
            extra, y = float(y[-1]), y[:-1]
        if self.rows is not None:
            full = np.zeros(self.full_rows)
            full[self.rows] = y
            y = full
        return y, extra

    def rmatvec(self, y: np.ndarray) -> np.ndarray:
        """``M.T @ y``."""
        y, extra = self._expand_rows(np.asarray(y, dtype=float))
        n = self.n_parties
        r, c = self.factor.shape
        work = y.reshape((r,) * n)  # axis j holds party n-1-j
        for axis in range(n):
            work = np.moveaxis(np.tensordot(self.factor, work, axes=([0], [axis])), 0, axis)
        scores = work.reshape(-1)
        if self.cols is not None:
            scores = scores[self.cols]
        return scores + extra

    def columns(self, idx) -> np.ndarray:
        """Dense columns ``M[:, idx]``."""
        idx = np.asarray(idx, dtype=np.int64)
        full_idx = idx if self.cols is None else self.cols[idx]
        n = self.n_parties
        r, c = self.factor.shape
        out = np.ones((len(full_idx), 1))
        for k in range(n):
            digit = (full_idx // c**k) % c
            out = (self.factor[:, digit].T[:, :, None] * out[:, None, :]).reshape(len(full_idx), -1)
        cols = out.T
        if self.rows is not None:
            cols = cols[self.rows]
        if self.extra_ones_row:
            cols = np.vstack((cols, np.ones((1, cols.shape[1]))))
        return cols

    def matvec(self, q: np.ndarray, support=None) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        support = np.flatnonzero(q) if support is None else np.asarray(support)
        return self.columns(support) @ q[support]

    def dense(self) -> np.ndarray:
        return self.columns(np.arange(self.shape[1]))


@lru_cache(maxsize=None)
def correlation_operator(n_parties: int) -> KronOperator:
    """Vertices in the correlation basis: 3**N rows (row 0 is the all-ones normalization)."""
    return KronOperator(CORRELATION_FACTOR, n_parties)


@lru_cache(maxsize=None)
def probability_operator(n_parties: int) -> KronOperator:
    """Vertices in the probability basis (kron row order) plus a normalization row."""
    return KronOperator(PROBABILITY_FACTOR, n_parties, extra_ones_row=True)


@lru_cache(maxsize=None)
def flip_partner(n_parties: int) -> np.ndarray:
    """Index of the strategy with every outcome negated."""
    v = np.arange(4**n_parties)
    out = np.zeros_like(v)
    for k in range(n_parties):
        out += (3 - ((v >> (2 * k)) & 3)) << (2 * k)
    return out


@lru_cache(maxsize=None)
def even_correlation_operator(n_parties: int) -> KronOperator:
    """Correlation-basis vertices restricted to even-size subsets, one column per flip pair.

    Negating all outcomes leaves even-order correlations unchanged, so the two
    strategies of a flip pair coincide on these rows.
    """
    rows = np.flatnonzero(ix.subset_sizes(n_parties) % 2 == 0)
    v = np.arange(4**n_parties)
    cols = v[v < flip_partner(n_parties)]
    return KronOperator(CORRELATION_FACTOR, n_parties, rows=rows, cols=cols)


def probabilities_to_kron_order(table: np.ndarray, n_parties: int) -> np.ndarray:
    """Reorder ``p[s, o]`` into the row order of :func:`probability_operator`."""
    n = n_parties
    work = np.asarray(table, dtype=float).reshape((2,) * (2 * n))
    # axes: s_{n-1} .. s_0, o_{n-1} .. o_0  ->  s_{n-1}, o_{n-1}, ..., s_0, o_0
    order = [a for j in range(n) for a in (j, n + j)]
    return work.transpose(order).reshape(-1)
