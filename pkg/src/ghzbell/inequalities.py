"""Full-correlation Bell inequalities: CHSH, MABK and WWZB.

All evaluators accept either a :class:`CorrelationTable` or a raw array of full
correlations whose last axis has length ``2**N`` (little-endian setting index),
so Monte Carlo code can evaluate whole batches at once.
"""
from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Any

import numpy as np

from . import _indexing as ix
from .correlations import CorrelationTable
from .exceptions import ResourceLimitError, UsageError

GUARD_BAND = 1e-9
MABK_ALL_LIMIT = 16
WWZB_LIMIT = 24
BRUTEFORCE_LIMIT = 20
ENUMERATION_LIMIT = 4


class InequalityClass(str, enum.Enum):
    S1 = "s1"
    S1S2 = "s1s2"
    CHSH4 = "chsh4"
    MABK = "mabk"
    WWZB = "wwzb"
    COMPLETE_SET = "complete"


@dataclass(frozen=True)
class InequalityVerdict:
    violated: bool
    best_value: float
    classical_bound: float
    witness: Any = None

    @property
    def margin(self) -> float:
        return self.best_value - self.classical_bound


def _full_array(table) -> tuple[np.ndarray, int]:
    full = table.full if isinstance(table, CorrelationTable) else np.asarray(table, dtype=float)
    size = full.shape[-1]
    n = size.bit_length() - 1
    if n < 1 or 2**n != size:
        raise UsageError(f"full-correlation length {size} is not a power of two")
    return full, n


def _verdict(value: float, bound: float, witness) -> InequalityVerdict:
    return InequalityVerdict(bool(value > bound + GUARD_BAND), float(value), float(bound), witness)


def classical_bound(n_parties: int, cls: InequalityClass = InequalityClass.MABK) -> float:
    if InequalityClass(cls) is InequalityClass.CHSH4:
        return 2.0
    return float(2**n_parties)


def quantum_bound(n_parties: int) -> float:
    """Largest quantum value of any single MABK expression."""
    return 2.0 ** ((3 * n_parties - 1) / 2)


# -- coefficients -------------------------------------------------------------


def mabk_beta(s: int, n_parties: int) -> float:
    """Closed-form MABK coefficient for a setting string of popcount ``s``."""
    if not 0 <= s <= n_parties:
        raise UsageError(f"popcount {s} outside [0, {n_parties}]")
    return 2.0 ** ((n_parties + 1) / 2) * math.cos(math.pi / 4 * (1 + n_parties - 2 * s))


@lru_cache(maxsize=None)
def _beta_lookup(n_parties: int) -> np.ndarray:
    table = np.array([mabk_beta(s, n_parties) for s in range(n_parties + 1)])
    table.setflags(write=False)
    return table


@lru_cache(maxsize=None)
def mabk_coefficients(n_parties: int) -> np.ndarray:
    """beta(popcount(s)) for every setting integer ``s``."""
    coeffs = _beta_lookup(n_parties)[ix.popcounts(n_parties)]
    coeffs.setflags(write=False)
    return coeffs


def mabk_beta_bruteforce(settings, n_parties: int | None = None) -> float:
    """MABK coefficient summed directly over all outcome sign vectors ``a``."""
    bits = np.asarray([int(b) for b in settings])
    n = len(bits) if n_parties is None else int(n_parties)
    if len(bits) != n:
        raise UsageError(f"setting string has {len(bits)} bits, expected {n}")
    if n > BRUTEFORCE_LIMIT:
        raise ResourceLimitError(f"N = {n} exceeds the brute-force limit {BRUTEFORCE_LIMIT}")
    a = 1 - 2 * ix.setting_bits(n)  # rows run over {-1, 1}^N
    weights = math.sqrt(2) * np.cos(math.pi / 4 * (n + 1 - a.sum(axis=1)))
    signs = np.prod(np.where(bits[None, :] == 1, a, 1), axis=1)
    return float(np.dot(weights, signs))


# -- transforms ---------------------------------------------------------------


def fwht(values: np.ndarray) -> np.ndarray:
    """Unnormalized Walsh-Hadamard transform along the last axis.

    ``out[..., a] = sum_s (-1)^{popcount(a & s)} values[..., s]``.
    """
    arr = np.array(values, dtype=float)
    size = arr.shape[-1]
    if size & (size - 1):
        raise UsageError("transform length must be a power of two")
    lead = arr.shape[:-1]
    h = 1
    while h < size:
        arr = arr.reshape(lead + (size // (2 * h), 2, h))
        x, y = arr[..., 0, :], arr[..., 1, :]
        arr = np.stack((x + y, x - y), axis=-2)
        h *= 2
    return arr.reshape(lead + (size,))


# -- evaluators ---------------------------------------------------------------


def s1_values(full) -> np.ndarray:
    full, n = _full_array(full)
    return np.abs(full @ mabk_coefficients(n))


def s2_values(full) -> np.ndarray:
    full, n = _full_array(full)
    return np.abs(full @ mabk_coefficients(n)[::-1])


def evaluate_s1(table) -> float:
    return float(s1_values(table))


def evaluate_s2(table) -> float:
    return float(s2_values(table))


def mabk_all_values(full) -> np.ndarray:
    """|MABK| value for every setting-flip mask ``m`` (last axis indexed by ``m``)."""
    full, n = _full_array(full)
    if n > MABK_ALL_LIMIT:
        raise ResourceLimitError(f"N = {n} exceeds the MABK-class limit {MABK_ALL_LIMIT}")
    # V[m] = sum_s g(s ^ m) E(s) is an XOR correlation, diagonal in the Hadamard basis.
    g_hat = fwht(mabk_coefficients(n))
    return np.abs(fwht(g_hat * fwht(full)) / 2**n)


def evaluate_mabk_all(table) -> InequalityVerdict:
    values = mabk_all_values(table)
    best = int(np.argmax(values))
    n = values.shape[-1].bit_length() - 1
    return _verdict(values[best], 2.0**n, best)


def evaluate_mabk_mask(table, mask: int) -> float:
    """Value of the single MABK inequality obtained by flipping the settings in ``mask``."""
    full, n = _full_array(table)
    coeffs = mabk_coefficients(n)[np.arange(2**n) ^ int(mask)]
    return float(np.abs(full @ coeffs))


# Rows give the sign pattern applied to (E00, E01, E10, E11); row j carries the minus sign at j.
_CHSH_SIGNS = np.ones((4, 4)) - 2 * np.eye(4)
# Setting integer s1 + 2 s2 -> position in (E00, E01, E10, E11).
_CHSH_ORDER = np.array([0, 2, 1, 3])


def chsh4_values(full) -> np.ndarray:
    full, n = _full_array(full)
    if n != 2:
        raise UsageError("the CHSH class is defined for two parties")
    return np.abs(full[..., _CHSH_ORDER] @ _CHSH_SIGNS.T)


def evaluate_chsh4(table) -> InequalityVerdict:
    """Best of the four CHSH forms; the witness is the position of the minus sign."""
    values = chsh4_values(table)
    best = int(np.argmax(values))
    return _verdict(values[best], 2.0, best)


def wwzb_values(full) -> np.ndarray:
    full, n = _full_array(full)
    if n > WWZB_LIMIT:
        raise ResourceLimitError(f"N = {n} exceeds the WWZB limit {WWZB_LIMIT}")
    return np.abs(fwht(full)).sum(axis=-1)


def evaluate_wwzb(table) -> InequalityVerdict:
    full, n = _full_array(table)
    return _verdict(wwzb_values(full), 2.0**n, "wwzb")


def best_values(full, cls: InequalityClass) -> np.ndarray:
    """Largest value within ``cls`` per row of a batch of full correlations.

    The complete set is not available here since it needs restricted correlations.
    """
    full, n = _full_array(full)
    cls = InequalityClass(cls)
    if cls is InequalityClass.S1:
        return s1_values(full)
    if cls is InequalityClass.S1S2:
        return np.maximum(s1_values(full), s2_values(full))
    if cls is InequalityClass.MABK:
        return mabk_all_values(full).max(axis=-1)
    if cls is InequalityClass.WWZB:
        return wwzb_values(full)
    if cls is InequalityClass.CHSH4:
        return chsh4_values(full).max(axis=-1)
    raise UsageError(f"{cls.value} cannot be evaluated from full correlations alone")


def margins(full, cls: InequalityClass) -> np.ndarray:
    """Best value minus the classical bound, per row."""
    full, n = _full_array(full)
    return best_values(full, cls) - classical_bound(n, cls)


def violation_flags(full, cls: InequalityClass) -> np.ndarray:
    """Boolean violation indicator per row (bound plus guard band)."""
    return margins(full, cls) > GUARD_BAND


def check_violation(table: CorrelationTable, cls: InequalityClass, **lp_options) -> InequalityVerdict:
    """Decide whether ``table`` violates some member of ``cls``.

    For the complete set the verdict comes from the local-polytope test:
    ``best_value`` is the normalized violation of the separating inequality
    (0 when local) against a bound of 0.
    """
    cls = InequalityClass(cls)
    n = table.n_parties
    if cls is InequalityClass.S1:
        return _verdict(evaluate_s1(table), 2.0**n, "S1")
    if cls is InequalityClass.S1S2:
        s1, s2 = evaluate_s1(table), evaluate_s2(table)
        return _verdict(max(s1, s2), 2.0**n, "S1" if s1 >= s2 else "S2")
    if cls is InequalityClass.CHSH4:
        return evaluate_chsh4(table)
    if cls is InequalityClass.MABK:
        return evaluate_mabk_all(table)
    if cls is InequalityClass.WWZB:
        return evaluate_wwzb(table)
    from .local_polytope import is_local_correlation_basis

    verdict = is_local_correlation_basis(table, **lp_options)
    value = 0.0 if verdict.is_local else verdict.violation
    return InequalityVerdict(not verdict.is_local, float(value), 0.0, "lp")


# -- equivalence class --------------------------------------------------------


def _canonical(tensor: np.ndarray) -> tuple:
    rounded = np.round(tensor, 9) + 0.0  # +0.0 folds -0.0 into 0.0
    flipped = -rounded + 0.0
    return min(tuple(rounded.tolist()), tuple(flipped.tolist()))


def relabel_coefficients(
    coeffs: np.ndarray, permutation, setting_flips: int, outcome_flips: np.ndarray
) -> np.ndarray:
    """Coefficient tensor of the inequality after a relabeling.

    Party ``k`` of the new labeling is party ``permutation[k]`` of the old one;
    ``setting_flips`` is a bit mask of parties with ``s -> 1 - s``;
    ``outcome_flips[k, s]`` negates the outcome of party ``k`` at setting ``s``.
    """
    n = len(permutation)
    bits = ix.setting_bits(n)
    flipped = bits ^ ((int(setting_flips) >> np.arange(n)) & 1)
    old_bits = np.empty_like(bits)
    old_bits[:, list(permutation)] = flipped
    old_index = (old_bits << np.arange(n)).sum(axis=1)
    sign = np.prod(np.where(np.asarray(outcome_flips)[np.arange(n), bits], -1.0, 1.0), axis=1)
    return sign * coeffs[old_index]


def enumerate_mabk_class(n_parties: int) -> set[tuple]:
    """Distinct MABK coefficient tensors under all relabelings, up to global sign."""
    n = int(n_parties)
    if n > ENUMERATION_LIMIT:
        raise ResourceLimitError(f"N = {n} exceeds the enumeration limit {ENUMERATION_LIMIT}")
    if n < 2:
        raise UsageError("N must be at least 2")
    base = np.asarray(mabk_coefficients(n))
    found = set()
    for perm in itertools.permutations(range(n)):
        for mask in range(2**n):
            for flips in range(4**n):
                outcome = ((flips >> np.arange(2 * n)) & 1).reshape(n, 2).astype(bool)
                found.add(_canonical(relabel_coefficients(base, perm, mask, outcome)))
    return found
