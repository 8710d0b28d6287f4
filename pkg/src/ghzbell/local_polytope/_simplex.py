"""Dense phase-1 tableau simplex for L1 distance to a convex hull.

Solves ``min sum(r+ + r-)`` s.t. ``A q + r+ - r- = b`` with all variables
non-negative.  With the all-ones row included in ``A`` this is the L1 distance
from ``b`` to the convex hull of the columns of ``A``.
"""
from __future__ import annotations

import numba
import numpy as np

_REDUCED_COST_TOL = 1e-11
_PIVOT_TOL = 1e-10
_DEGENERATE_SWITCH = 50

STATUS_OPTIMAL = 0
STATUS_ITERATION_LIMIT = 1
STATUS_NUMERICAL = 2


@numba.njit(cache=True)
def _phase_one(tableau, basis, max_iter):  # pragma: no cover - compiled
    m = tableau.shape[0] - 1
    ncols = tableau.shape[1] - 1
    obj = m
    stalled = 0
    for it in range(max_iter):
        use_bland = stalled >= _DEGENERATE_SWITCH
        enter = -1
        best = -_REDUCED_COST_TOL
        for j in range(ncols):
            d = tableau[obj, j]
            if d < best:
                enter = j
                if use_bland:
                    break
                best = d
        if enter < 0:
            return STATUS_OPTIMAL, it
        ratio = np.inf
        for i in range(m):
            a = tableau[i, enter]
            if a > _PIVOT_TOL:
                r = tableau[i, ncols] / a
                if r < ratio:
                    ratio = r
        if ratio == np.inf:
            # the objective is bounded below by zero, so this only happens through round-off
            return STATUS_NUMERICAL, it
        # among (near-)ties prefer the largest pivot, or the lowest basic index under Bland's rule
        leave = -1
        limit = ratio + 1e-12 * (1.0 + abs(ratio))
        for i in range(m):
            a = tableau[i, enter]
            if a > _PIVOT_TOL and tableau[i, ncols] / a <= limit:
                if leave < 0:
                    leave = i
                elif use_bland:
                    if basis[i] < basis[leave]:
                        leave = i
                elif a > tableau[leave, enter]:
                    leave = i
        stalled = stalled + 1 if ratio <= 1e-15 else 0
        piv = tableau[leave, enter]
        for j in range(ncols + 1):
            tableau[leave, j] /= piv
        for i in range(m + 1):
            if i != leave:
                f = tableau[i, enter]
                if f != 0.0:
                    for j in range(ncols + 1):
                        tableau[i, j] -= f * tableau[leave, j]
        basis[leave] = enter
    return STATUS_ITERATION_LIMIT, max_iter


def _reinvert(tableau, basis, ext, rhs, cost):
    """Rebuild the tableau from the original data for the current basis."""
    m = len(basis)
    B = ext[:, basis]
    try:
        tableau[:m, :-1] = np.linalg.solve(B, ext)
        tableau[:m, -1] = np.maximum(np.linalg.solve(B, rhs), 0.0)
    except np.linalg.LinAlgError:
        return False
    cb = cost[basis]
    tableau[m, :-1] = cost - cb @ tableau[:m, :-1]
    tableau[m, basis] = 0.0
    tableau[m, -1] = -cb @ tableau[:m, -1]
    return bool(np.all(np.isfinite(tableau)))


def l1_distance_simplex(A: np.ndarray, b: np.ndarray, max_iter: int | None = None, refresh: int = 32):
    """Return ``(status, distance, q, y)``.

    ``q`` holds the weights on the columns of ``A``; ``y`` is the optimal dual
    with ``|y| <= 1`` so that ``y @ b - max(A.T @ y)`` equals the distance.
    The tableau is rebuilt from the original data every ``refresh`` pivots and
    again before optimality is accepted, which keeps round-off from piling up
    on these highly degenerate problems.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    m, n = A.shape
    sign = np.where(b < 0, -1.0, 1.0)
    rows = np.arange(m)
    ext = np.zeros((m, n + 2 * m))
    ext[:, :n] = sign[:, None] * A
    ext[rows, n + rows] = sign
    ext[rows, n + m + rows] = -sign
    rhs = np.abs(b)
    cost = np.zeros(n + 2 * m)
    cost[n:] = 1.0
    basis = np.where(sign > 0, n + rows, n + m + rows).astype(np.int64)
    tableau = np.zeros((m + 1, n + 2 * m + 1))
    tableau[:m, :-1] = ext
    tableau[:m, -1] = rhs
    tableau[m, :-1] = cost - ext.sum(axis=0)
    tableau[m, -1] = -rhs.sum()
    if max_iter is None:
        max_iter = 20 * (m + n) + 1000
    used = 0
    status = STATUS_ITERATION_LIMIT
    while used < max_iter:
        status, it = _phase_one(tableau, basis, min(refresh, max_iter - used))
        used += max(it, 1)
        if not _reinvert(tableau, basis, ext, rhs, cost):
            status = STATUS_NUMERICAL
            break
        if status == STATUS_OPTIMAL and tableau[m, :-1].min() >= -_REDUCED_COST_TOL:
            break
        if status == STATUS_NUMERICAL:
            break
    solution = np.zeros(n + 2 * m)
    solution[basis] = tableau[:m, -1]
    q = np.maximum(solution[:n], 0.0)
    distance = float(solution[n:].sum())
    # the reduced cost of r+_i is 1 - y_i in the unflipped dual
    y = np.clip(1.0 - tableau[m, n : n + m], -1.0, 1.0)
    return status, distance, q, y
