"""Index encodings shared across modules.

Setting strings are encoded little-endian in the party index: bit ``k`` of the
integer is ``s_k``.  The correlation tensor uses a ternary little-endian code
where digit ``k`` is 0 (party ``k`` absent), 1 (``s_k = 0``) or 2 (``s_k = 1``).
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np


@lru_cache(maxsize=None)
def setting_bits(n_parties: int) -> np.ndarray:
    """(2**N, N) array of setting bits, row ``i`` is the little-endian string of ``i``."""
    idx = np.arange(2**n_parties)
    bits = (idx[:, None] >> np.arange(n_parties)[None, :]) & 1
    bits.setflags(write=False)
    return bits


@lru_cache(maxsize=None)
def popcounts(n_parties: int) -> np.ndarray:
    counts = setting_bits(n_parties).sum(axis=1)
    counts.setflags(write=False)
    return counts


@lru_cache(maxsize=None)
def ternary_digits(n_parties: int) -> np.ndarray:
    """(3**N, N) array of ternary digits, little-endian."""
    idx = np.arange(3**n_parties)
    digits = (idx[:, None] // 3 ** np.arange(n_parties)[None, :]) % 3
    digits.setflags(write=False)
    return digits


@lru_cache(maxsize=None)
def subset_sizes(n_parties: int) -> np.ndarray:
    sizes = (ternary_digits(n_parties) > 0).sum(axis=1)
    sizes.setflags(write=False)
    return sizes


@lru_cache(maxsize=None)
def full_index(n_parties: int) -> np.ndarray:
    """Map setting integer -> ternary index of the corresponding full correlation."""
    bits = setting_bits(n_parties)
    out = ((1 + bits) * 3 ** np.arange(n_parties)[None, :]).sum(axis=1)
    out.setflags(write=False)
    return out


def ternary_index(n_parties: int, subset, settings) -> int:
    """Ternary index of the restricted correlation on ``subset`` with ``settings``."""
    index = 0
    for party, s in zip(subset, settings):
        index += (1 + int(s)) * 3**int(party)
    return index


def bits_to_int(bits) -> int:
    return sum(int(b) << k for k, b in enumerate(bits))
