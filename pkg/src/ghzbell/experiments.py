"""Monte Carlo estimators and closed-form checks.

Samples are processed in chunks aligned with the sampler's RNG blocks, so a
chunk's verdicts depend only on its index range; running chunks in a process
pool gives results identical to a serial run.
"""
from __future__ import annotations

import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import _indexing as ix
from . import inequalities as iq
from .correlations import (
    NOISELESS,
    CorrelationTable,
    MeasurementConfig,
    NoiseSpec,
    correlation_tensors,
    full_correlations,
    build_correlation_table,
    correlation_table_to_probabilities,
)
from .exceptions import UsageError
from .inequalities import InequalityClass
from .local_polytope import DEFAULT_MAX_PARTIES, is_local_correlation_basis
from .local_polytope.strategies import KronOperator, probabilities_to_kron_order
from .sampling import BLOCK_SIZE, SamplerSpec, sample_batch

VIOLATED = 1
SATISFIED = 0
INDETERMINATE = -1

_MEMORY_BUDGET = 2**21  # complex entries per sub-batch of full correlations


def default_workers() -> int:
    try:
        return max(1, len(os.sched_getaffinity(0)))
    except AttributeError:  # pragma: no cover - non-Linux
        return max(1, os.cpu_count() or 1)


def make_sampler(sampler, n_parties: int, seed: int, **kwargs) -> SamplerSpec:
    """Build a :class:`SamplerSpec` from a name (``rim``, ``rom``, ``prom-xy``,
    ``prom-rotated`` with ``alpha``/``lam``, ``prom-perturbed`` with ``lambda_std``)
    or re-seed an existing spec."""
    if isinstance(sampler, SamplerSpec):
        if sampler.n_parties != n_parties:
            raise UsageError("sampler and estimator disagree on N")
        return sampler.with_seed(seed)
    name = str(sampler).lower()
    if name in ("rim", "rom"):
        return SamplerSpec(name, n_parties, seed)
    if name == "prom-xy":
        return SamplerSpec.prom_xy(n_parties, seed)
    if name == "prom-rotated":
        return SamplerSpec.prom_rotated(n_parties, kwargs["alpha"], kwargs["lam"], seed)
    if name == "prom-perturbed":
        return SamplerSpec.prom_perturbed(n_parties, kwargs["lambda_std"], seed)
    raise UsageError(f"unknown sampler {sampler!r}")


# -- per-sample classification -------------------------------------------------------


@dataclass(frozen=True)
class _ChunkTask:
    spec: SamplerSpec
    noise: NoiseSpec
    classes: tuple
    start: int
    count: int
    lp_method: str = "auto"
    shortcut: bool = True
    max_parties: int = DEFAULT_MAX_PARTIES


def classify_directions(
    directions: np.ndarray,
    noise: NoiseSpec,
    classes: Sequence[InequalityClass],
    lp_method: str = "auto",
    shortcut: bool = True,
    max_parties: int = DEFAULT_MAX_PARTIES,
) -> dict:
    """Verdict codes (1 violated, 0 not, -1 indeterminate) per sample and class.

    With ``shortcut`` the complete-set test skips the LP for tables that already
    violate the WWZB inequality, which implies nonlocality.
    """
    classes = [InequalityClass(c) for c in classes]
    n_samples, n_parties = directions.shape[:2]
    out = {c: np.zeros(n_samples, dtype=np.int8) for c in classes}
    sub = max(1, _MEMORY_BUDGET // 2**n_parties)
    lp = InequalityClass.COMPLETE_SET in classes
    for lo in range(0, n_samples, sub):
        batch = directions[lo : lo + sub]
        if lp:
            tensors = correlation_tensors(batch, noise)
            full = tensors[:, ix.full_index(n_parties)]
        else:
            full = full_correlations(batch, noise)
        for c in classes:
            if c is not InequalityClass.COMPLETE_SET:
                out[c][lo : lo + len(batch)] = iq.violation_flags(full, c)
        if lp:
            codes = out[InequalityClass.COMPLETE_SET]
            known = iq.violation_flags(full, InequalityClass.WWZB) if shortcut else np.zeros(len(batch), bool)
            for i in range(len(batch)):
                if known[i]:
                    codes[lo + i] = VIOLATED
                    continue
                verdict = is_local_correlation_basis(
                    tensors[i], method=lp_method, max_parties=max_parties, on_indeterminate="return"
                )
                codes[lo + i] = INDETERMINATE if verdict.is_local is None else int(not verdict.is_local)
    return out


def _run_chunk(task: _ChunkTask) -> dict:
    directions = sample_batch(task.spec, task.start, task.count)["directions"]
    return classify_directions(
        directions, task.noise, task.classes, task.lp_method, task.shortcut, task.max_parties
    )


def _chunks(n_samples: int, chunk: int = BLOCK_SIZE) -> list[tuple[int, int]]:
    return [(lo, min(chunk, n_samples - lo)) for lo in range(0, n_samples, chunk)]


def _map(fn, tasks: list, workers: int | None):
    workers = default_workers() if workers is None else int(workers)
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
        return list(pool.map(fn, tasks))


def classify_samples(
    spec: SamplerSpec,
    noise: NoiseSpec,
    classes: Sequence[InequalityClass],
    n_samples: int,
    workers: int | None = None,
    lp_method: str = "auto",
    shortcut: bool = True,
    max_parties: int = DEFAULT_MAX_PARTIES,
    chunk: int | None = None,
) -> dict:
    """Verdict codes for samples ``0 .. n_samples-1`` of ``spec``."""
    classes = tuple(InequalityClass(c) for c in classes)
    if n_samples < 1:
        raise UsageError("n_samples must be positive")
    if InequalityClass.COMPLETE_SET in classes and spec.n_parties > max_parties:
        raise UsageError(f"the complete set is limited to N <= {max_parties}")
    if chunk is None:
        # LP chunks are small so the pool stays balanced
        chunk = 256 if InequalityClass.COMPLETE_SET in classes else BLOCK_SIZE
    tasks = [
        _ChunkTask(spec, noise, classes, lo, count, lp_method, shortcut, max_parties)
        for lo, count in _chunks(n_samples, chunk)
    ]
    parts = _map(_run_chunk, tasks, workers)
    return {c: np.concatenate([p[c] for p in parts]) for c in classes}


# -- estimates -------------------------------------------------------------------------


@dataclass(frozen=True)
class EstimateRecord:
    n_parties: int
    sampler: SamplerSpec
    noise: NoiseSpec
    inequality_class: InequalityClass
    n_samples: int
    n_violations: int
    n_indeterminate: int
    p_hat: float
    std_err: float
    seed: int
    wall_time: float = 0.0

    @classmethod
    def from_codes(cls, spec, noise, ineq, codes: np.ndarray, wall_time: float = 0.0) -> "EstimateRecord":
        n = int(codes.size)
        indeterminate = int(np.count_nonzero(codes == INDETERMINATE))
        violations = int(np.count_nonzero(codes == VIOLATED))
        valid = n - indeterminate
        p = violations / valid if valid else float("nan")
        err = math.sqrt(p * (1.0 - p) / valid) if valid else float("nan")
        return cls(spec.n_parties, spec, noise, InequalityClass(ineq), n, violations, indeterminate, p, err, spec.seed, wall_time)

    def to_row(self) -> dict:
        return {
            "n_parties": self.n_parties,
            "sampler": self.sampler.variant,
            "lambda_std": "" if self.sampler.lambda_std is None else self.sampler.lambda_std,
            "noise": self.noise.kind.value,
            "nu": self.noise.nu,
            "inequality_class": self.inequality_class.value,
            "n_samples": self.n_samples,
            "n_violations": self.n_violations,
            "n_indeterminate": self.n_indeterminate,
            "p_hat": self.p_hat,
            "std_err": self.std_err,
            "seed": self.seed,
            "wall_time": self.wall_time,
        }


def estimate_many(
    n_parties: int,
    sampler,
    noise: NoiseSpec,
    classes: Sequence[InequalityClass],
    n_samples: int,
    seed: int,
    workers: int | None = None,
    lp_method: str = "auto",
    shortcut: bool = True,
    **sampler_args,
) -> dict:
    """One :class:`EstimateRecord` per class, all computed on the same samples."""
    spec = make_sampler(sampler, n_parties, seed, **sampler_args)
    t0 = time.perf_counter()
    codes = classify_samples(spec, noise, classes, n_samples, workers, lp_method, shortcut)
    elapsed = time.perf_counter() - t0
    return {c: EstimateRecord.from_codes(spec, noise, c, codes[c], elapsed) for c in codes}


def estimate_p(
    n_parties: int,
    sampler,
    noise: NoiseSpec = NOISELESS,
    inequality_class: InequalityClass = InequalityClass.MABK,
    n_samples: int = 10**5,
    seed: int = 0,
    workers: int | None = None,
    lp_method: str = "auto",
    **sampler_args,
) -> EstimateRecord:
    """Monte Carlo estimate of the probability that sampled measurements violate a class."""
    cls = InequalityClass(inequality_class)
    return estimate_many(n_parties, sampler, noise, [cls], n_samples, seed, workers, lp_method, **sampler_args)[cls]


# -- aligned-plane closed forms ----------------------------------------------------------


@dataclass(frozen=True)
class Theorem1Report:
    n_parties: int
    n_samples: int
    floor_failures: int
    closed_form_failures: int
    worst_margin: float
    min_ratio: float
    max_relative_error: float

    @property
    def passed(self) -> bool:
        return self.floor_failures == 0 and self.closed_form_failures == 0


def prom_xy_values(n_parties: int, n_samples: int, seed: int, start: int = 0):
    """(S1, S2, chi) for PROM-xy samples ``start .. start+n_samples-1``."""
    spec = SamplerSpec.prom_xy(n_parties, seed)
    s1, s2, chi = [], [], []
    sub = max(1, _MEMORY_BUDGET // 2**n_parties)
    for lo in range(start, start + n_samples, sub):
        count = min(sub, start + n_samples - lo)
        batch = sample_batch(spec, lo, count)
        full = full_correlations(batch["directions"])
        s1.append(iq.s1_values(full))
        s2.append(iq.s2_values(full))
        chi.append(batch["chi"])
    return np.concatenate(s1), np.concatenate(s2), np.concatenate(chi)


def theorem1_closed_form(n_parties: int, chi) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form S1 and S2 for PROM-xy with aggregate angle ``chi``."""
    scale = iq.quantum_bound(n_parties)
    chi = np.asarray(chi, dtype=float)
    return (
        scale * np.abs(np.sin(chi + (n_parties - 1) * math.pi / 4)),
        scale * np.abs(np.sin(chi + (n_parties + 1) * math.pi / 4)),
    )


def theorem1_check(n_parties: int, n_samples: int = 10**4, seed: int = 0, tol: float = 1e-9) -> Theorem1Report:
    """Check the max(S1, S2) floor and the closed form of S1 on PROM-xy samples.

    The closed-form error is measured relative to the quantum maximum
    2^((3N-1)/2), the natural scale of S1.
    """
    s1, s2, chi = prom_xy_values(n_parties, n_samples, seed)
    floor = 2.0 ** (1.5 * n_parties - 1)
    best = np.maximum(s1, s2)
    cf1, _ = theorem1_closed_form(n_parties, chi)
    rel = np.abs(s1 - cf1) / iq.quantum_bound(n_parties)
    return Theorem1Report(
        n_parties,
        n_samples,
        int(np.count_nonzero(best < floor - tol)),
        int(np.count_nonzero(rel > tol)),
        float((best - floor).min()),
        float((best / iq.quantum_bound(n_parties)).min()),
        float(rel.max()),
    )


def threshold_probability(epsilon: float) -> float:
    """Probability that PROM-xy reaches max(S1, S2) >= (1 - epsilon) times the quantum maximum."""
    x = min(1.0, max(-1.0, 1.0 - float(epsilon)))
    return min(1.0, max(0.0, 4.0 / math.pi * math.acos(x)))


@dataclass(frozen=True)
class ThresholdPoint:
    epsilon: float
    predicted: float
    p_hat: float
    std_err: float
    n_samples: int

    @property
    def z_score(self) -> float:
        if self.std_err == 0.0:
            return 0.0 if abs(self.p_hat - self.predicted) < 1e-12 else math.inf
        return abs(self.p_hat - self.predicted) / self.std_err


def threshold_law(
    n_parties: int, epsilons: Iterable[float], n_samples: int = 10**5, seed: int = 0, rel_tol: float = 1e-12
) -> list[ThresholdPoint]:
    """Empirical frequency of max(S1, S2) >= (1 - eps) 2^((3N-1)/2) on PROM-xy samples."""
    s1, s2, _ = prom_xy_values(n_parties, n_samples, seed)
    ratio = np.maximum(s1, s2) / iq.quantum_bound(n_parties)
    out = []
    for eps in epsilons:
        hits = np.count_nonzero(ratio >= (1.0 - eps) * (1.0 - rel_tol))
        p = hits / n_samples
        out.append(ThresholdPoint(float(eps), threshold_probability(eps), p, math.sqrt(p * (1 - p) / n_samples), n_samples))
    return out


def noise_thresholds(n_parties: int) -> tuple[float, float]:
    """(nu_always, nu_never) for PROM-xy: below the first some MABK pair is always violated,
    from the second on none ever is."""
    n = int(n_parties)
    return 1.0 - 2.0 ** (1.0 / n) / math.sqrt(2.0), 1.0 - 2.0 ** (1.0 / (2 * n)) / math.sqrt(2.0)


def noisy_prom_probability(n_parties: int, nu: float) -> float:
    """Closed-form PROM-xy probability of violating S1 or S2 under noise strength ``nu``."""
    n = int(n_parties)
    if not 0.0 <= nu <= 1.0:
        raise UsageError("nu must lie in [0, 1]")
    if nu >= 1.0:
        return 0.0
    x = 2.0 ** ((1.0 - n) / 2.0) / (1.0 - nu) ** n
    if x <= 1.0 / math.sqrt(2.0):
        return 1.0
    if x >= 1.0:
        return 0.0
    return 4.0 / math.pi * math.acos(x)


# -- area fractions ---------------------------------------------------------------------


@dataclass(frozen=True)
class AreaRecord:
    n_parties: int
    inequality_class: InequalityClass
    alpha: np.ndarray = field(repr=False)
    lam: np.ndarray = field(repr=False)
    p_hat: np.ndarray = field(repr=False)
    n_evaluated: np.ndarray = field(repr=False)
    n_indeterminate: np.ndarray = field(repr=False)
    a0: float
    a1: float
    samples_per_node: int
    seed: int
    early_stop: bool = False

    def to_row(self) -> dict:
        return {
            "n_parties": self.n_parties,
            "inequality_class": self.inequality_class.value,
            "n_alpha": len(self.alpha),
            "n_lambda": len(self.lam),
            "samples_per_node": self.samples_per_node,
            "A0": self.a0,
            "A1": self.a1,
            "indeterminate": int(self.n_indeterminate.sum()),
            "seed": self.seed,
        }


def default_grid(n_alpha: int = 64, n_lambda: int = 64) -> tuple[np.ndarray, np.ndarray]:
    """Uniform alpha nodes on [0, 2 pi) and midpoint lambda nodes on [0, pi/2]."""
    alpha = np.arange(n_alpha) * 2.0 * math.pi / n_alpha
    lam = (np.arange(n_lambda) + 0.5) * (math.pi / 2) / n_lambda
    return alpha, lam


def node_seed(seed: int, i: int, j: int) -> int:
    state = np.random.SeedSequence(seed, spawn_key=(7, i, j)).generate_state(2, np.uint32)
    return int(state[0]) | (int(state[1]) << 32)


@dataclass(frozen=True)
class _NodeTask:
    n_parties: int
    cls: InequalityClass
    alpha: float
    lam: float
    i: int
    j: int
    seed: int
    samples: int
    early_stop: bool
    lp_method: str


def _run_node(task: _NodeTask) -> tuple[int, int, int]:
    """(violations, non-violations, indeterminate) at one grid node."""
    spec = SamplerSpec.prom_rotated(task.n_parties, task.alpha, task.lam, node_seed(task.seed, task.i, task.j))
    step = 64 if task.early_stop else BLOCK_SIZE
    hits = misses = unknown = 0
    for lo, count in _chunks(task.samples, step):
        directions = sample_batch(spec, lo, count)["directions"]
        codes = classify_directions(directions, NOISELESS, [task.cls], task.lp_method)[task.cls]
        hits += int(np.count_nonzero(codes == VIOLATED))
        misses += int(np.count_nonzero(codes == SATISFIED))
        unknown += int(np.count_nonzero(codes == INDETERMINATE))
        if task.early_stop and hits and misses:
            break
    return hits, misses, unknown


def area_fractions(
    n_parties: int,
    inequality_class: InequalityClass,
    grid: tuple[np.ndarray, np.ndarray] | None = None,
    samples_per_node: int = 10**4,
    seed: int = 0,
    workers: int | None = None,
    early_stop: bool = False,
    lp_method: str = "auto",
) -> AreaRecord:
    """Fractions A0 (some violation seen) and A1 (no non-violation seen) of shared normals.

    Nodes are weighted by sin(lambda).  With ``early_stop`` a node stops
    sampling once it has both a violating and a non-violating sample, which
    settles both indicators; its ``p_hat`` then covers only the evaluated
    samples.  Indeterminate samples are excluded and reported per node.
    """
    cls = InequalityClass(inequality_class)
    alpha, lam = default_grid() if grid is None else (np.asarray(grid[0], float), np.asarray(grid[1], float))
    tasks = [
        _NodeTask(n_parties, cls, float(a), float(l), i, j, seed, samples_per_node, early_stop, lp_method)
        for i, a in enumerate(alpha)
        for j, l in enumerate(lam)
    ]
    results = np.array(_map(_run_node, tasks, workers), dtype=np.int64).reshape(len(alpha), len(lam), 3)
    hits, misses, unknown = results[..., 0], results[..., 1], results[..., 2]
    evaluated = hits + misses
    with np.errstate(invalid="ignore", divide="ignore"):
        p_hat = np.where(evaluated > 0, hits / np.maximum(evaluated, 1), np.nan)
    weights = np.broadcast_to(np.sin(lam)[None, :], hits.shape)
    if weights.sum() <= 0:
        weights = np.ones_like(weights)
    valid = evaluated > 0
    g0 = (hits > 0) & valid
    g1 = (misses == 0) & valid
    total = weights[valid].sum() if valid.any() else 1.0
    a0 = float((weights * g0).sum() / total)
    a1 = float((weights * g1).sum() / total)
    return AreaRecord(n_parties, cls, alpha, lam, p_hat, evaluated, unknown, a0, a1, samples_per_node, seed, early_stop)


# -- perturbed normals --------------------------------------------------------------------


@dataclass(frozen=True)
class PerturbedPoint:
    lambda_std: float
    records: dict
    delta: float


def perturbed_sweep(
    n_parties: int,
    lambda_stds: Iterable[float],
    classes: Sequence[InequalityClass] = (InequalityClass.S1S2, InequalityClass.MABK),
    n_samples: int = 10**5,
    seed: int = 0,
    workers: int | None = None,
) -> list[PerturbedPoint]:
    """Violation probabilities under per-party perturbed normals, one point per width.

    All classes share the samples at a given width; ``delta`` is
    p_MABK - p_S1S2 when both classes are present.
    """
    classes = [InequalityClass(c) for c in classes]
    out = []
    for std in lambda_stds:
        records = estimate_many(n_parties, "prom-perturbed", NOISELESS, classes, n_samples, seed, workers, lambda_std=float(std))
        delta = float("nan")
        if InequalityClass.MABK in records and InequalityClass.S1S2 in records:
            delta = records[InequalityClass.MABK].p_hat - records[InequalityClass.S1S2].p_hat
        out.append(PerturbedPoint(float(std), records, delta))
    return out


# -- noise sweeps ------------------------------------------------------------------------


def noise_sweep(
    n_parties: int,
    sampler,
    kinds: Iterable[str],
    nus: Iterable[float],
    inequality_class: InequalityClass = InequalityClass.COMPLETE_SET,
    n_samples: int = 10**5,
    seed: int = 0,
    workers: int | None = None,
    lp_method: str = "auto",
) -> list[EstimateRecord]:
    """Estimates on a (noise kind, nu) grid; every point reuses the same measurement samples.

    A zero strength is the noiseless baseline, reported once.
    """
    out = []
    nus = sorted(set(float(v) for v in nus))
    if nus and nus[0] == 0.0:
        out.append(estimate_p(n_parties, sampler, NOISELESS, inequality_class, n_samples, seed, workers, lp_method))
    for kind in kinds:
        for nu in nus:
            if nu > 0.0:
                out.append(estimate_p(n_parties, sampler, NoiseSpec(kind, nu), inequality_class, n_samples, seed, workers, lp_method))
    return out


# -- finite statistics ---------------------------------------------------------------------


# Per-party map from (setting, outcome) to ternary digit: numerator and denominator of E_K.
_NUMERATOR = np.array([[1.0, 1.0, 0.0], [1.0, -1.0, 0.0], [1.0, 0.0, 1.0], [1.0, 0.0, -1.0]])
_DENOMINATOR = np.abs(_NUMERATOR)


def simulate_experiment(
    config: MeasurementConfig, noise: NoiseSpec = NOISELESS, n_copies: int = 10**4, seed: int = 0
) -> CorrelationTable:
    """Empirical correlations from ``n_copies`` rounds with uniformly random settings.

    Each round every party picks a setting uniformly, outcomes follow the Born
    rule.  ``E_K(s_K)`` averages the outcome product over all rounds whose
    settings agree with ``s_K`` on ``K``; correlations for settings never
    drawn are reported as 0.
    """
    n = config.n_parties
    if n_copies < 1:
        raise UsageError("n_copies must be positive")
    probs = correlation_table_to_probabilities(build_correlation_table(config, noise))
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(9, n))))
    per_setting = rng.multinomial(n_copies, np.full(2**n, 1.0 / 2**n))
    counts = np.zeros_like(probs)
    for s, m in enumerate(per_setting):
        if m:
            row = probs[s] / probs[s].sum()
            counts[s] = rng.multinomial(m, row)
    flat = probabilities_to_kron_order(counts, n)
    numerator = KronOperator(_NUMERATOR, n).rmatvec(flat)
    denominator = KronOperator(_DENOMINATOR, n).rmatvec(flat)
    with np.errstate(invalid="ignore", divide="ignore"):
        tensor = np.where(denominator > 0, numerator / np.maximum(denominator, 1), 0.0)
    tensor[0] = 1.0
    return CorrelationTable.from_tensor(np.clip(tensor, -1.0, 1.0))


def r_statistic(p_mabk: float, p_s1: float) -> float:
    """log2 of the ratio between the MABK-class and single-inequality violation probabilities."""
    if p_s1 <= 0:
        raise UsageError("p_s1 must be positive")
    if p_mabk <= 0:
        raise UsageError("p_mabk must be positive")
    return math.log2(p_mabk / p_s1)
