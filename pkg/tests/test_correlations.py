import math

import numpy as np
import pytest

import oracles
from ghzbell import _indexing as ix
from ghzbell.correlations import (
    NOISELESS,
    CorrelationTable,
    MeasurementConfig,
    MeasurementDirection,
    NoiseSpec,
    bell_state_correlation,
    build_correlation_table,
    correlation_table_to_probabilities,
    correlation_tensors,
    full_correlations,
    ghz_full_correlation,
    ghz_restricted_correlation,
    tensor_to_probabilities,
)
from ghzbell.exceptions import ConsistencyError, ResourceLimitError, UsageError

R2 = 1 / math.sqrt(2)
Z_ONLY = np.tile(np.array([0.0, 0.0, 1.0]), (2, 1))


def test_two_party_reference_values(chsh_directions):
    cfg = MeasurementConfig(chsh_directions)
    expected = {(0, 0): R2, (0, 1): -R2, (1, 0): -R2, (1, 1): -R2}
    for s, value in expected.items():
        assert ghz_full_correlation(cfg, NOISELESS, s) == pytest.approx(value, abs=1e-12)


def test_z_axis_cases():
    odd = MeasurementConfig(np.stack([Z_ONLY] * 3))
    assert ghz_full_correlation(odd, NOISELESS, (0, 1, 0)) == pytest.approx(0.0, abs=1e-15)
    even = MeasurementConfig(np.stack([Z_ONLY] * 2))
    for s in [(0, 0), (0, 1), (1, 0), (1, 1)]:
        assert ghz_full_correlation(even, NOISELESS, s) == pytest.approx(1.0)
    four = MeasurementConfig(np.stack([Z_ONLY] * 4))
    assert ghz_restricted_correlation(four, NOISELESS, [1, 2], (0, 1)) == pytest.approx(1.0)


@pytest.mark.parametrize("kind,nu", [("none", 0.0), ("depolarizing", 0.1), ("dephasing", 0.3)])
@pytest.mark.parametrize("n", [2, 3, 4])
def test_full_and_restricted_match_density_oracle(rng, n, kind, nu):
    d = oracles.random_directions(rng, n)
    rho = oracles.noisy_ghz(n, kind, nu)
    noise = NoiseSpec(kind, nu)
    cfg = MeasurementConfig(d)
    table = build_correlation_table(cfg, noise)
    digits = ix.ternary_digits(n)
    for t in range(3**n):
        subset = [k for k in range(n) if digits[t, k]]
        settings = [digits[t, k] - 1 for k in subset]
        want = oracles.correlation(rho, d, subset, settings)
        assert table.tensor[t] == pytest.approx(want, abs=1e-10)
        if 0 < len(subset) < n:
            assert ghz_restricted_correlation(cfg, noise, subset, settings) == pytest.approx(want, abs=1e-10)
        elif len(subset) == n:
            assert ghz_full_correlation(cfg, noise, settings) == pytest.approx(want, abs=1e-10)


def test_batched_matches_scalar(rng):
    d = np.stack([oracles.random_directions(rng, 5) for _ in range(7)])
    noise = NoiseSpec("dephasing", 0.2)
    full = full_correlations(d, noise)
    for i in range(7):
        cfg = MeasurementConfig(d[i])
        for s in range(32):
            bits = [(s >> k) & 1 for k in range(5)]
            assert full[i, s] == pytest.approx(ghz_full_correlation(cfg, noise, bits), abs=1e-12)


def test_odd_restricted_vanish_and_tensor_layout(rng):
    d = oracles.random_directions(rng, 4)
    t = correlation_tensors(d)[0]
    sizes = ix.subset_sizes(4)
    assert np.all(t[sizes % 2 == 1] == 0.0)
    assert t[0] == 1.0
    assert np.allclose(t[ix.full_index(4)], full_correlations(d)[0])


def test_table_for_reference_and_z_configs(chsh_directions):
    table = build_correlation_table(MeasurementConfig(chsh_directions))
    assert np.allclose(table.full, [R2, -R2, -R2, -R2])  # setting index s1 + 2 s2
    assert table.restricted([0], [0]) == 0.0 and table.restricted([1], [1]) == 0.0
    z_table = build_correlation_table(MeasurementConfig(np.stack([Z_ONLY] * 2)))
    assert np.allclose(z_table.full, 1.0)
    assert z_table.restricted([0], [1]) == 0.0


def test_probabilities():
    blank = np.zeros(9)
    blank[0] = 1.0
    assert np.allclose(tensor_to_probabilities(blank), 0.25)


def test_probabilities_match_born_rule(rng, chsh_directions):
    table = build_correlation_table(MeasurementConfig(chsh_directions))
    p = correlation_table_to_probabilities(table)
    # outcomes 00 and 11 agree
    assert p[0, 0] + p[0, 3] == pytest.approx((1 + R2) / 2)
    d = oracles.random_directions(rng, 3)
    p3 = correlation_table_to_probabilities(build_correlation_table(MeasurementConfig(d)))
    assert np.allclose(p3, oracles.probability_table(oracles.ghz_density(3), d), atol=1e-10)
    assert np.allclose(p3.sum(axis=1), 1.0)


def test_invalid_tensor_is_rejected():
    bad = np.zeros(9)
    bad[0] = 1.0
    # both marginals +1 but anti-correlated outcomes
    bad[ix.ternary_index(2, [0], [0])] = 1.0
    bad[ix.ternary_index(2, [1], [0])] = 1.0
    bad[ix.ternary_index(2, [0, 1], [0, 0])] = -1.0
    with pytest.raises(ConsistencyError):
        correlation_table_to_probabilities(CorrelationTable.from_tensor(bad))


def test_bell_state(chsh_directions, rng):
    cfg = MeasurementConfig(chsh_directions)
    th, ph = cfg.theta, cfg.phi
    assert bell_state_correlation(th[0, 0], ph[0, 0], th[1, 0], ph[1, 0]) == pytest.approx(R2)
    assert bell_state_correlation(0.0, 0.3, 0.0, 1.2) == pytest.approx(1.0)
    d = oracles.random_directions(rng, 2)
    cfg = MeasurementConfig(d)
    want = oracles.correlation(oracles.ghz_density(2), d, [0, 1], [1, 0])
    got = bell_state_correlation(cfg.theta[0, 1], cfg.phi[0, 1], cfg.theta[1, 0], cfg.phi[1, 0])
    assert got == pytest.approx(want, abs=1e-12)


def test_validation():
    with pytest.raises(UsageError):
        NoiseSpec("depolarizing", 1.5)
    with pytest.raises(UsageError):
        NoiseSpec("none", 0.2)
    with pytest.raises(UsageError):
        MeasurementDirection(1.0, 1.0, 0.0)
    with pytest.raises(UsageError):
        MeasurementConfig(np.ones((2, 2, 3)))
    with pytest.raises(UsageError):
        MeasurementConfig(np.stack([Z_ONLY]))
    cfg = MeasurementConfig(np.stack([Z_ONLY] * 3))
    with pytest.raises(UsageError):
        ghz_restricted_correlation(cfg, NOISELESS, [0, 1, 2], (0, 0, 0))
    with pytest.raises(UsageError):
        ghz_full_correlation(cfg, NOISELESS, (0, 2, 0))
    with pytest.raises(ResourceLimitError):
        build_correlation_table(MeasurementConfig(np.stack([Z_ONLY] * 9)))


def test_direction_angles_roundtrip():
    d = MeasurementDirection.from_angles(0.7, -2.1)
    assert d.theta == pytest.approx(0.7) and d.phi == pytest.approx(-2.1)
    pole = MeasurementDirection(0.0, 0.0, -1.0)
    assert pole.phi == 0.0 and pole.theta == pytest.approx(math.pi)
