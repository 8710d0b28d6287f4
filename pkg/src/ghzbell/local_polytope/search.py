"""Column-generation search for either a convex decomposition or a separating inequality.

Each round fits the target with non-negative least squares over a working set
of vertices, then uses the residual ``y = b - M q`` as a candidate Bell
functional.  If ``y @ b`` exceeds ``max_v y @ M_v`` the target lies outside the
hull; otherwise the vertices scoring highest on ``y`` join the working set.
"""
from __future__ import annotations

import numba
import numpy as np
from scipy.optimize import nnls

from .strategies import KronOperator


@numba.njit(cache=True)
def _chol_append(R, k, G, order, j):
    """Extend the Cholesky factor of ``G[order[:k]][:, order[:k]]`` by column ``j``."""
    r = np.empty(k)
    for a in range(k):
        acc = G[order[a], j]
        for b in range(a):
            acc -= R[b, a] * r[b]
        r[a] = acc / R[a, a]
    d = G[j, j]
    for a in range(k):
        d -= r[a] * r[a]
    if d <= 1e-14 * G[j, j]:
        return False
    for a in range(k):
        R[a, k] = r[a]
        R[k, a] = 0.0
    R[k, k] = np.sqrt(d)
    return True


@numba.njit(cache=True)
def _chol_delete(R, k, p):
    """Drop column ``p`` from a ``k``-column factor, restoring triangularity with Givens rotations."""
    for col in range(p, k - 1):
        for a in range(col + 2):
            R[a, col] = R[a, col + 1]
    for a in range(k):
        R[a, k - 1] = 0.0
    for col in range(p, k - 1):
        a, b = R[col, col], R[col + 1, col]
        r = np.hypot(a, b)
        c, s = a / r, b / r
        for j in range(col, k - 1):
            t1, t2 = R[col, j], R[col + 1, j]
            R[col, j] = c * t1 + s * t2
            R[col + 1, j] = -s * t1 + c * t2
        R[col + 1, col] = 0.0


@numba.njit(cache=True)
def _chol_solve(R, k, rhs):
    z = np.empty(k)
    for a in range(k):
        acc = rhs[a]
        for b in range(a):
            acc -= R[b, a] * z[b]
        z[a] = acc / R[a, a]
    for a in range(k - 1, -1, -1):
        acc = z[a]
        for b in range(a + 1, k):
            acc -= R[a, b] * z[b]
        z[a] = acc / R[a, a]
    return z


@numba.njit(cache=True)
def _gram_nnls(G, c, passive, max_iter):
    """Lawson-Hanson on the normal equations, started from the ``passive`` set.

    The Cholesky factor of the passive block is updated in place as columns
    enter and leave.  Returns ``(x, ok)``.
    """
    n = c.size
    x = np.zeros(n)
    R = np.zeros((n, n))
    order = np.empty(n, dtype=np.int64)
    inset = np.zeros(n, dtype=np.bool_)
    k = 0
    for i in range(n):
        if passive[i] and _chol_append(R, k, G, order, i):
            order[k] = i
            inset[i] = True
            k += 1
    tol = 1e-13 * max(1.0, np.abs(c).max())
    first = True
    for _ in range(max_iter):
        if not first:
            w = c - G @ x
            best, j = tol, -1
            for i in range(n):
                if not inset[i] and w[i] > best:
                    best, j = w[i], i
            if j < 0:
                return x, True
            if not _chol_append(R, k, G, order, j):
                return x, True
            order[k] = j
            inset[j] = True
            k += 1
        first = False
        for _inner in range(n + 1):
            rhs = np.empty(k)
            for a in range(k):
                rhs[a] = c[order[a]]
            sub = _chol_solve(R, k, rhs)
            alpha = 1.0
            bad = False
            for a in range(k):
                if sub[a] <= 0.0:
                    bad = True
                    i = order[a]
                    denom = x[i] - sub[a]
                    t = x[i] / denom if denom > 0 else 0.0
                    if t < alpha:
                        alpha = t
            if not bad:
                for a in range(k):
                    x[order[a]] = sub[a]
                break
            for a in range(k):
                i = order[a]
                x[i] += alpha * (sub[a] - x[i])
            # drop non-positive members, downdating the factor
            a = k - 1
            while a >= 0:
                i = order[a]
                if x[i] <= 1e-15 * max(1.0, abs(sub[a])):
                    x[i] = 0.0
                    inset[i] = False
                    _chol_delete(R, k, a)
                    for b in range(a, k - 1):
                        order[b] = order[b + 1]
                    k -= 1
                a -= 1
    return x, False


def _weighted_nnls(B: np.ndarray, target: np.ndarray, ridge: float, passive: np.ndarray) -> np.ndarray:
    gram = B.T @ B
    gram[np.diag_indices_from(gram)] += ridge * max(1.0, float(np.trace(gram)) / len(gram))
    x, ok = _gram_nnls(gram, B.T @ target, passive, 50 * B.shape[1] + 100)
    if ok and np.all(np.isfinite(x)):
        return x
    return nnls(B, target, maxiter=50 * B.shape[1])[0]


def certificate_search(
    op: KronOperator,
    target: np.ndarray,
    tol: float = 1e-7,
    anchor_row: int = 0,
    anchor_weight: float = 30.0,
    k_add: int = 32,
    max_iter: int = 300,
    ridge: float = 1e-12,
):
    """Return ``(status, payload)``.

    ``status`` is ``"local"`` with payload ``(support, weights)``, ``"nonlocal"``
    with payload ``y`` (the separating functional), or ``"undecided"``.
    """
    target = np.asarray(target, dtype=float)
    m, n_cols = op.shape
    row_weight = np.ones(m)
    row_weight[anchor_row] = anchor_weight
    weighted_target = target * row_weight

    support = np.zeros(0, dtype=np.int64)
    block = np.zeros((m, 0))
    q = np.zeros(0)
    fitted = np.zeros(m)
    for _ in range(max_iter):
        y = target - fitted
        if np.abs(y).sum() <= tol:
            return "local", (support, q)
        scores = op.rmatvec(y)
        if y @ target - scores.max() > tol * np.abs(y).max():
            return "nonlocal", y
        scores[support] = -np.inf
        available = n_cols - support.size
        if available == 0:
            return "undecided", None
        if available <= k_add:
            new = np.flatnonzero(np.isfinite(scores))
        else:
            new = np.argpartition(-scores, k_add)[:k_add]
        support = np.concatenate((support, new))
        block = np.hstack((block, op.columns(new)))
        passive = np.zeros(support.size, dtype=np.bool_)
        passive[: q.size] = True
        q = _weighted_nnls(block * row_weight[:, None], weighted_target, ridge, passive)
        keep = q > 0
        support, block, q = support[keep], block[:, keep], q[keep]
        fitted = block @ q
    return "undecided", None
