"""Membership of a behaviour in the local polytope.

A table is declared local when its L1 distance to the convex hull of the
deterministic strategies is at most :data:`LOCAL_TOL`.  Every verdict is
re-verified from scratch before it is returned: local verdicts by rebuilding
the table from the weights, nonlocal ones by recomputing the violation of the
separating functional over all vertices.  The normalized violation
``(y @ b - max_v y @ M_v) / max|y|`` is a lower bound on the L1 distance, so a
certified nonlocal verdict is consistent with the same threshold.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .. import _indexing as ix
from ..correlations import CorrelationTable
from ..exceptions import ResourceLimitError, SolverIndeterminateError, UsageError
from . import strategies as st
from ._simplex import STATUS_OPTIMAL, l1_distance_simplex
from .search import certificate_search

LOCAL_TOL = 1e-7
WEIGHT_SUM_TOL = 1e-8
REPRODUCTION_TOL = 1e-6
DEFAULT_MAX_PARTIES = 6
METHODS = ("auto", "simplex", "search", "highs")
_DENSE_SIMPLEX_SIZE = 2**17
_INPUT_TOL = 1e-12
_NORMALIZATION_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class PolytopeVerdict:
    """Outcome of a membership test.

    ``is_local`` is ``None`` only for indeterminate results, which the public
    functions turn into :class:`SolverIndeterminateError` unless asked not to.
    For nonlocal verdicts ``certificate`` holds the functional ``y`` (in the
    basis of the input) and ``violation`` its normalized violation.
    """

    is_local: bool | None
    weights: np.ndarray | None
    max_residual: float
    violation: float = 0.0
    certificate: np.ndarray | None = None
    method: str = ""

    @property
    def status(self) -> str:
        if self.is_local is None:
            return "indeterminate"
        return "local" if self.is_local else "nonlocal"


@dataclass
class _Problem:
    op: st.KronOperator
    target: np.ndarray
    full_op: st.KronOperator
    full_target: np.ndarray
    anchor_row: int
    lift_weights: object = None
    lift_functional: object = None


def _lift_identity(x):
    return x


def _certify_local(problem: _Problem, weights: np.ndarray, method: str) -> PolytopeVerdict | None:
    weights = np.maximum(np.asarray(weights, dtype=float), 0.0)
    full = (problem.lift_weights or _lift_identity)(weights)
    total = full.sum()
    if total <= 0 or not np.isfinite(total):
        return None
    full = full / total
    support = np.flatnonzero(full)
    residual = problem.full_op.columns(support) @ full[support] - problem.full_target
    if np.abs(residual).sum() > LOCAL_TOL or abs(full.sum() - 1.0) > WEIGHT_SUM_TOL:
        return None
    max_residual = float(np.abs(residual).max())
    if max_residual > REPRODUCTION_TOL:
        return None
    return PolytopeVerdict(True, full, max_residual, 0.0, None, method)


def _certify_nonlocal(problem: _Problem, functional: np.ndarray, method: str) -> PolytopeVerdict | None:
    y = (problem.lift_functional or _lift_identity)(np.asarray(functional, dtype=float))
    scale = np.abs(y).max()
    if not scale > 0 or not np.isfinite(scale):
        return None
    y = y / scale
    violation = float(y @ problem.full_target - problem.full_op.rmatvec(y).max())
    if not violation > LOCAL_TOL:
        return None
    return PolytopeVerdict(False, None, float("nan"), violation, y, method)


def _run_simplex(problem: _Problem):
    status, distance, q, y = l1_distance_simplex(problem.op.dense(), problem.target)
    if status != STATUS_OPTIMAL:
        return []
    return [("local", q), ("nonlocal", y)] if distance <= LOCAL_TOL else [("nonlocal", y), ("local", q)]


def _run_highs(problem: _Problem):
    A = problem.op.dense()
    m, n = A.shape
    eye = np.eye(m)
    cost = np.concatenate((np.zeros(n), np.ones(2 * m)))
    res = linprog(cost, A_eq=np.hstack((A, eye, -eye)), b_eq=problem.target, bounds=(0, None), method="highs")
    if res.status != 0:
        return []
    q = res.x[:n]
    y = np.asarray(res.eqlin.marginals)
    return [("local", q), ("nonlocal", y)] if res.fun <= LOCAL_TOL else [("nonlocal", y), ("local", q)]


def _run_search(problem: _Problem):
    status, payload = certificate_search(problem.op, problem.target, LOCAL_TOL, anchor_row=problem.anchor_row)
    if status == "local":
        support, q = payload
        weights = np.zeros(problem.op.shape[1])
        weights[support] = q
        return [("local", weights)]
    if status == "nonlocal":
        return [("nonlocal", payload)]
    return []


_BACKENDS = {"simplex": _run_simplex, "highs": _run_highs, "search": _run_search}


def _backend_order(problem: _Problem, method: str) -> list[str]:
    if method not in METHODS:
        raise UsageError(f"unknown method {method!r}; expected one of {METHODS}")
    if method != "auto":
        return [method]
    rows, cols = problem.op.shape
    if rows * cols <= _DENSE_SIMPLEX_SIZE:
        return ["simplex", "highs"]
    return ["search", "highs", "simplex"]


def _decide(problem: _Problem, method: str) -> PolytopeVerdict:
    for name in _backend_order(problem, method):
        for claim, payload in _BACKENDS[name](problem):
            if claim == "local":
                verdict = _certify_local(problem, payload, name)
            else:
                verdict = _certify_nonlocal(problem, payload, name)
            if verdict is not None:
                return verdict
    return PolytopeVerdict(None, None, float("nan"), 0.0, None, method)


def _check_cap(n_parties: int, max_parties: int) -> None:
    if max_parties > st.STRATEGY_LIMIT:
        raise ResourceLimitError(f"the party cap cannot exceed {st.STRATEGY_LIMIT}")
    if n_parties > max_parties:
        raise ResourceLimitError(f"N = {n_parties} exceeds the local-polytope cap {max_parties}")


def _finish(verdict: PolytopeVerdict, on_indeterminate: str) -> PolytopeVerdict:
    if verdict.is_local is None and on_indeterminate == "raise":
        raise SolverIndeterminateError("no solver produced a verifiable verdict")
    return verdict


def is_local(
    prob_table,
    n_parties: int | None = None,
    method: str = "auto",
    max_parties: int = DEFAULT_MAX_PARTIES,
    on_indeterminate: str = "raise",
) -> PolytopeVerdict:
    """Test whether ``p[s, o]`` is a convex mixture of deterministic local strategies.

    ``prob_table`` has shape ``(2**N, 2**N)`` (rows settings, columns outcomes,
    little-endian, outcome bit set meaning -1) or is the flattened version.
    Weights in the verdict are indexed like :func:`enumerate_strategies`.
    """
    table = np.asarray(prob_table, dtype=float)
    size = table.size
    n = round(np.log2(size) / 2) if size > 0 else 0
    if n < 1 or 4**n != size:
        raise UsageError(f"a probability table needs 4**N entries, got {size}")
    if n_parties is not None and n_parties != n:
        raise UsageError(f"table has {n} parties, expected {n_parties}")
    table = table.reshape(2**n, 2**n)
    if table.min() < -_INPUT_TOL or table.max() > 1.0 + _INPUT_TOL:
        raise UsageError("probabilities must lie in [0, 1]")
    if np.abs(table.sum(axis=1) - 1.0).max() > _NORMALIZATION_TOL:
        raise UsageError("each setting's outcome distribution must sum to 1")
    _check_cap(n, max_parties)
    op = st.probability_operator(n)
    target = np.append(st.probabilities_to_kron_order(table, n), 1.0)
    problem = _Problem(op, target, op, target, anchor_row=op.shape[0] - 1)
    verdict = _decide(problem, method)
    if verdict.certificate is not None:
        # report the functional in the p[s, o] layout of the input
        y, extra = verdict.certificate[:-1], verdict.certificate[-1]
        n2 = 2 * n
        inverse = np.argsort([a for j in range(n) for a in (j, n + j)])
        y_table = y.reshape((2,) * n2).transpose(inverse).reshape(2**n, 2**n)
        # fold the normalization coefficient into the table, one row suffices
        y_table = y_table + extra / 2**n
        verdict = PolytopeVerdict(False, None, verdict.max_residual, verdict.violation, y_table, verdict.method)
    return _finish(verdict, on_indeterminate)


def _correlation_problem(tensor: np.ndarray, n: int, reduce: bool) -> _Problem:
    full_op = st.correlation_operator(n)
    odd = ix.subset_sizes(n) % 2 == 1
    if reduce and n >= 2 and not np.any(tensor[odd]):
        op = st.even_correlation_operator(n)
        partner = st.flip_partner(n)
        rows, cols = op.rows, op.cols

        def lift_weights(q):
            full = np.zeros(4**n)
            np.add.at(full, cols, q / 2)
            np.add.at(full, partner[cols], q / 2)
            return full

        def lift_functional(y):
            full = np.zeros(3**n)
            full[rows] = y
            return full

        return _Problem(op, tensor[rows], full_op, tensor, 0, lift_weights, lift_functional)
    return _Problem(full_op, tensor, full_op, tensor, 0)


def is_local_correlation_basis(
    table,
    method: str = "auto",
    max_parties: int = DEFAULT_MAX_PARTIES,
    on_indeterminate: str = "raise",
    reduce_symmetry: bool = True,
) -> PolytopeVerdict:
    """Locality test on the 3**N correlations (all subsets, empty one included).

    Accepts a :class:`CorrelationTable` with restricted entries or the raw
    ternary-indexed tensor.  When every odd-order correlation vanishes the
    problem is solved on the even-order rows, one vertex per pair of strategies
    related by a global outcome flip, and the result is mapped back.
    """
    if isinstance(table, CorrelationTable):
        if not table.has_restricted:
            raise UsageError("the correlation-basis test needs restricted correlations")
        tensor = np.asarray(table.tensor)
    else:
        tensor = np.asarray(table, dtype=float).reshape(-1)
    size = tensor.size
    n = round(np.log(size) / np.log(3)) if size > 1 else 0
    if n < 1 or 3**n != size:
        raise UsageError(f"a correlation tensor needs 3**N entries, got {size}")
    if abs(tensor[0] - 1.0) > _INPUT_TOL:
        raise UsageError("the empty-subset correlation must be 1")
    if np.abs(tensor).max() > 1.0 + _INPUT_TOL:
        raise UsageError("correlations must lie in [-1, 1]")
    _check_cap(n, max_parties)
    verdict = _decide(_correlation_problem(tensor, n, reduce_symmetry), method)
    return _finish(verdict, on_indeterminate)
