import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from ghzbell import _indexing as ix
from ghzbell import inequalities as iq
from ghzbell.correlations import CorrelationTable, MeasurementConfig, build_correlation_table, full_correlations
from ghzbell.exceptions import ResourceLimitError, UsageError
from ghzbell.inequalities import InequalityClass as C
from ghzbell.local_polytope.strategies import correlation_operator

R2 = 1 / math.sqrt(2)
REFERENCE_FULL = np.array([R2, -R2, -R2, -R2])  # setting index s1 + 2 s2


def test_beta_values():
    assert iq.mabk_beta(1, 2) == pytest.approx(2.0)
    assert iq.mabk_beta(0, 2) == pytest.approx(-2.0)
    assert iq.mabk_beta_bruteforce([0, 1]) == pytest.approx(2.0)
    assert iq.mabk_beta_bruteforce([0, 0]) == pytest.approx(-2.0)
    for n in range(2, 9):
        assert all(abs(iq.mabk_beta(s, n)) <= 2 ** ((n + 1) / 2) + 1e-12 for s in range(n + 1))
    with pytest.raises(UsageError):
        iq.mabk_beta(4, 3)


def test_bruteforce_depends_on_popcount_only():
    vals = {}
    for s in range(8):
        bits = [(s >> k) & 1 for k in range(3)]
        vals.setdefault(sum(bits), set()).add(round(iq.mabk_beta_bruteforce(bits), 12))
    assert all(len(v) == 1 for v in vals.values())


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 12).flatmap(lambda n: st.lists(st.integers(0, 1), min_size=n, max_size=n)))
def test_bruteforce_matches_closed_form(bits):
    n = len(bits)
    assert abs(iq.mabk_beta_bruteforce(bits) - iq.mabk_beta(sum(bits), n)) <= 1e-9 * 2 ** ((n + 1) / 2)


def test_s_values_reference():
    assert iq.evaluate_s1(REFERENCE_FULL) == pytest.approx(4 * math.sqrt(2))
    # S2 vanishes for these correlations; the CHSH form tied to S2 holds the other value
    assert iq.evaluate_s2(REFERENCE_FULL) == pytest.approx(0.0, abs=1e-12)
    assert iq.evaluate_s1(np.zeros(8)) == 0.0 and iq.evaluate_s2(np.zeros(8)) == 0.0


def test_s1_closed_form_xy_plane():
    # N=3, all parties measure x and y (chi = 0)
    d = np.tile(np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]), (3, 1, 1))
    assert iq.evaluate_s1(full_correlations(d)[0]) == pytest.approx(16.0)


def test_chsh_reference():
    v = iq.evaluate_chsh4(REFERENCE_FULL)
    assert v.violated and v.best_value == pytest.approx(2 * math.sqrt(2))
    ones = iq.evaluate_chsh4(np.ones(4))
    assert not ones.violated and np.allclose(iq.chsh4_values(np.ones(4)), 2.0)
    with pytest.raises(UsageError):
        iq.chsh4_values(np.zeros(8))


def test_chsh_against_direct_and_mabk(rng):
    for _ in range(50):
        f = full_correlations(oracles.random_directions(rng, 2))[0]
        direct = oracles.chsh_direct(f[0], f[2], f[1], f[3])
        assert iq.chsh4_values(f).max() == pytest.approx(direct, abs=1e-12)
        assert iq.evaluate_chsh4(f).best_value == pytest.approx(iq.evaluate_mabk_all(f).best_value / 2, abs=1e-12)
        # the four MABK masks are the four CHSH forms scaled by two
        assert np.allclose(np.sort(iq.mabk_all_values(f)), np.sort(2 * iq.chsh4_values(f)), atol=1e-12)


def test_mabk_masks(rng):
    for n in (2, 3, 4):
        f = full_correlations(oracles.random_directions(rng, n))[0]
        values = iq.mabk_all_values(f)
        assert values[0] == pytest.approx(iq.evaluate_s1(f), abs=1e-12)
        assert values[-1] == pytest.approx(iq.evaluate_s2(f), abs=1e-12)
        for m in range(2**n):
            assert values[m] == pytest.approx(oracles.mabk_direct(f, n, m), abs=1e-9)
            assert values[m] == pytest.approx(iq.evaluate_mabk_mask(f, m), abs=1e-12)
        assert iq.evaluate_mabk_all(f).best_value >= values.max() - 1e-15


def test_wwzb(rng):
    assert not iq.evaluate_wwzb(np.zeros(4)).violated
    assert iq.evaluate_wwzb(REFERENCE_FULL).violated
    for n in (2, 3, 6):
        f = full_correlations(oracles.random_directions(rng, n))[0]
        assert iq.wwzb_values(f) == pytest.approx(oracles.wwzb_naive(f, n), abs=1e-9)


def test_fwht_roundtrip(rng):
    x = rng.normal(size=(3, 16))
    assert np.allclose(iq.fwht(iq.fwht(x)) / 16, x)
    with pytest.raises(UsageError):
        iq.fwht(np.ones(6))


def test_deterministic_vertices_respect_wwzb():
    op = correlation_operator(3)
    vertices = op.dense()
    full = vertices[ix.full_index(3)].T
    assert np.all(iq.wwzb_values(full) <= 8 + 1e-12)


def test_hierarchy_flags(rng):
    d = np.stack([oracles.random_directions(rng, 4) for _ in range(500)])
    f = full_correlations(d)
    chain = [iq.violation_flags(f, c) for c in (C.S1, C.S1S2, C.MABK, C.WWZB)]
    for a, b in zip(chain, chain[1:]):
        assert not np.any(a & ~b)


def test_enumeration_counts():
    assert len(iq.enumerate_mabk_class(2)) == 4
    assert len(iq.enumerate_mabk_class(3)) == 8
    with pytest.raises(ResourceLimitError):
        iq.enumerate_mabk_class(5)


def test_party_outcome_flip_is_global_sign():
    coeffs = np.asarray(iq.mabk_coefficients(3))
    flips = np.zeros((3, 2), dtype=bool)
    flips[1] = True
    out = iq.relabel_coefficients(coeffs, (0, 1, 2), 0, flips)
    assert np.allclose(out, -coeffs)


def test_check_violation_routes(chsh_directions):
    table = build_correlation_table(MeasurementConfig(chsh_directions))
    assert iq.check_violation(table, C.CHSH4).violated
    assert iq.check_violation(table, C.MABK).witness in range(4)
    lp = iq.check_violation(table, C.COMPLETE_SET)
    assert lp.violated and lp.best_value > 0
    flat = CorrelationTable(2, np.zeros(4), np.eye(1, 9).ravel())
    assert not iq.check_violation(flat, C.COMPLETE_SET).violated
    with pytest.raises(UsageError):
        iq.violation_flags(np.zeros(4), C.COMPLETE_SET)
