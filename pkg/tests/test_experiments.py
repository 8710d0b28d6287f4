import math

import numpy as np
import pytest

import oracles
from ghzbell import experiments as ex
from ghzbell.correlations import NOISELESS, MeasurementConfig, NoiseSpec, build_correlation_table, full_correlations
from ghzbell.exceptions import UsageError
from ghzbell.inequalities import InequalityClass as C, mabk_coefficients, quantum_bound, violation_flags
from ghzbell.sampling import SamplerSpec, sample_directions

R2 = 1 / math.sqrt(2)


def test_estimate_is_deterministic_and_worker_independent():
    classes = [C.S1, C.MABK, C.WWZB, C.COMPLETE_SET]
    a = ex.estimate_many(3, "rom", NOISELESS, classes, 1500, seed=4, workers=1)
    b = ex.estimate_many(3, "rom", NOISELESS, classes, 1500, seed=4, workers=3)
    for c in classes:
        assert a[c].n_violations == b[c].n_violations
    assert ex.estimate_p(3, "rom", inequality_class=C.MABK, n_samples=1500, seed=4).n_violations == a[C.MABK].n_violations


def test_hierarchy_per_sample():
    spec = SamplerSpec("rim", 3, 8)
    codes = ex.classify_samples(spec, NOISELESS, [C.S1, C.S1S2, C.MABK, C.WWZB, C.COMPLETE_SET], 1200, workers=1, shortcut=False)
    chain = [codes[c] == ex.VIOLATED for c in (C.S1, C.S1S2, C.MABK, C.WWZB, C.COMPLETE_SET)]
    for lo, hi in zip(chain, chain[1:]):
        assert not np.any(lo & ~hi)


def test_prom_xy_always_violates():
    for n in (2, 5, 9):
        assert ex.estimate_p(n, "prom-xy", inequality_class=C.S1S2, n_samples=2000, seed=1).p_hat == 1.0


def test_single_mask_symmetry():
    d = sample_directions(SamplerSpec("rim", 3, 2), 0, 20000)
    full = full_correlations(d)
    n = len(full)
    p0 = np.mean(violation_flags(full, C.S1))
    coeffs = np.asarray(mabk_coefficients(3))[np.arange(8) ^ 5]
    p5 = np.mean(np.abs(full @ coeffs) > 8 + 1e-9)
    assert abs(p0 - p5) < 3 * math.sqrt(2 * p0 * (1 - p0) / n)


def test_record_statistics():
    rec = ex.EstimateRecord.from_codes(SamplerSpec("rim", 2), NOISELESS, C.S1, np.array([1, 0, 0, -1, 1], dtype=np.int8))
    assert rec.n_indeterminate == 1 and rec.n_violations == 2
    assert rec.p_hat == pytest.approx(0.5)
    assert rec.std_err == pytest.approx(math.sqrt(0.25 / 4))
    assert rec.to_row()["sampler"] == "rim"


def test_theorem1_report():
    rep = ex.theorem1_check(4, 3000, seed=2)
    assert rep.passed and rep.min_ratio >= R2 - 1e-9
    # the worst case of the closed form sits at sin = 1/sqrt(2)
    s1, _ = ex.theorem1_closed_form(5, math.pi / 4 - 4 * math.pi / 4)
    assert s1 == pytest.approx(quantum_bound(5) * R2)


def test_threshold_probability_examples():
    assert ex.threshold_probability(0.0) == 0.0
    assert ex.threshold_probability(1 - R2) == pytest.approx(1.0)
    assert ex.threshold_probability(1 - math.cos(math.pi / 8)) == pytest.approx(0.5)
    assert ex.threshold_probability(0.9) == 1.0


def test_noise_thresholds():
    a, b = ex.noise_thresholds(2)
    assert a == pytest.approx(0.0, abs=1e-15) and a <= b
    a4, _ = ex.noise_thresholds(4)
    assert a4 == pytest.approx(1 - 2**0.25 / math.sqrt(2))
    big = ex.noise_thresholds(4000)
    assert big == pytest.approx((1 - R2, 1 - R2), abs=1e-3)
    for n in (3, 4, 5):
        lo, hi = ex.noise_thresholds(n)
        assert ex.noisy_prom_probability(n, lo) == pytest.approx(1.0)
        assert ex.noisy_prom_probability(n, hi) == pytest.approx(0.0, abs=1e-12)
        assert ex.noisy_prom_probability(n, max(0.0, lo - 0.01)) == 1.0
        assert ex.noisy_prom_probability(n, hi + 0.01) == 0.0
    with pytest.raises(UsageError):
        ex.noisy_prom_probability(3, 1.2)


def test_noise_threshold_monte_carlo():
    lo, _ = ex.noise_thresholds(4)
    rec = ex.estimate_p(4, "prom-xy", NoiseSpec("depolarizing", lo - 0.01), C.S1S2, 10**4, seed=3)
    assert rec.p_hat == 1.0
    lo3, hi3 = ex.noise_thresholds(3)
    nu = (lo3 + hi3) / 2
    rec = ex.estimate_p(3, "prom-xy", NoiseSpec("dephasing", nu), C.S1S2, 2 * 10**4, seed=3)
    assert abs(rec.p_hat - ex.noisy_prom_probability(3, nu)) < 3 * rec.std_err


def test_area_fractions_degenerate_grid():
    rec = ex.area_fractions(3, C.S1S2, grid=(np.linspace(0, 6, 4), np.array([0.0])), samples_per_node=200, seed=1)
    assert rec.a1 == 1.0 and rec.a0 == 1.0
    assert rec.p_hat.shape == (4, 1) and np.all(rec.p_hat == 1.0)


def test_area_fractions_small_grid_is_reproducible():
    grid = ex.default_grid(4, 4)
    a = ex.area_fractions(2, C.CHSH4, grid, samples_per_node=300, seed=5, workers=1)
    b = ex.area_fractions(2, C.CHSH4, grid, samples_per_node=300, seed=5, workers=2)
    assert a.a0 == b.a0 and a.a1 == b.a1 and np.array_equal(a.p_hat, b.p_hat)
    assert 0.0 <= a.a1 <= a.a0 <= 1.0
    early = ex.area_fractions(2, C.COMPLETE_SET, grid, samples_per_node=300, seed=5, early_stop=True)
    assert 0.0 <= early.a1 <= early.a0 <= 1.0
    assert early.to_row()["n_alpha"] == 4


def test_perturbed_sweep():
    points = ex.perturbed_sweep(3, [0.0, 0.3], n_samples=4000, seed=2)
    assert points[0].records[C.MABK].p_hat == 1.0 and points[0].records[C.S1S2].p_hat == 1.0
    assert points[0].delta == 0.0
    assert 0.0 <= points[1].delta < 0.01


def test_noise_sweep_monotone():
    records = ex.noise_sweep(3, "rom", ["depolarizing", "dephasing"], [0.0, 0.1, 0.2], C.COMPLETE_SET, 600, seed=3)
    base = records[0]
    assert base.noise == NOISELESS and len(records) == 5
    depol = [base] + [r for r in records[1:] if r.noise.kind.value == "depolarizing"]
    deph = [base] + [r for r in records[1:] if r.noise.kind.value == "dephasing"]
    for series in (depol, deph):
        assert all(a.n_violations >= b.n_violations for a, b in zip(series, series[1:]))
    assert all(p.n_violations >= q.n_violations for p, q in zip(deph, depol))


def test_simulate_experiment(chsh_directions):
    cfg = MeasurementConfig(chsh_directions)
    n_copies = 10**6
    emp = ex.simulate_experiment(cfg, n_copies=n_copies, seed=1)
    # about n/4 rounds per setting pair
    stderr = math.sqrt((1 - 0.5) / (n_copies / 4))
    assert abs(emp.value((0, 0)) - R2) < 3 * stderr
    z = np.tile(np.array([0.0, 0.0, 1.0]), (2, 2, 1))
    det = ex.simulate_experiment(MeasurementConfig(z), n_copies=37, seed=0)
    # single-party marginals stay random, only the full correlations are deterministic
    assert np.array_equal(det.full, np.ones(4))


def test_simulate_experiment_converges(rng):
    cfg = MeasurementConfig(oracles.random_directions(rng, 3))
    exact = build_correlation_table(cfg).tensor
    devs = []
    for n_copies in (10**3, 10**4, 10**5, 10**6):
        errs = [np.abs(ex.simulate_experiment(cfg, n_copies=n_copies, seed=s).tensor - exact).max() for s in range(4)]
        devs.append(np.mean(errs))
    slopes = np.diff(np.log10(devs))
    assert np.all(np.abs(slopes + 0.5) < 0.2)


def test_r_statistic():
    assert ex.r_statistic(0.3, 0.3) == 0.0
    assert ex.r_statistic(0.10002, 0.01328) == pytest.approx(2.913, abs=5e-4)
    assert ex.r_statistic(0.22037, 0.00009) == pytest.approx(11.258, abs=5e-4)
    with pytest.raises(UsageError):
        ex.r_statistic(0.2, 0.0)


def test_usage_errors():
    with pytest.raises(UsageError):
        ex.estimate_p(7, "rim", inequality_class=C.COMPLETE_SET, n_samples=10)
    with pytest.raises(UsageError):
        ex.estimate_p(3, "bogus", n_samples=10)
    with pytest.raises(UsageError):
        ex.estimate_p(3, "rim", n_samples=0)
