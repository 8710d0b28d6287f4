"""GHZ correlation functions for two-setting, two-outcome local measurements.

Every party ``k`` holds two Bloch directions ``(Omega^k_0, Omega^k_1)``.  For
the N-qubit GHZ state the full correlation for setting string ``s`` is

    E(s) = cos(sum_k phi^k_{s_k}) prod_k sin(theta^k_{s_k})
           + delta_N prod_k cos(theta^k_{s_k}),      delta_N = (N + 1) mod 2,

and a restricted correlation over a proper subset ``K`` of parties is
``delta_|K| prod_{k in K} cos(theta^k_{s_k})``.

Batched routines never go through angles: ``sin(theta) e^{i phi}`` is just
``x + iy``, so the cosine of the summed azimuths times the sine product is the
real part of a product of complex numbers.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import _indexing as ix
from .exceptions import ConsistencyError, ResourceLimitError, UsageError

FULL_TABLE_LIMIT = 16
RESTRICTED_TABLE_LIMIT = 8

_UNIT_TOL = 1e-12
_POLE_TOL = 1e-12
_CLAMP_TOL = 1e-12
_PROB_FAIL_TOL = 1e-9


class NoiseKind(str, enum.Enum):
    NONE = "none"
    DEPOLARIZING = "depolarizing"
    DEPHASING = "dephasing"


@dataclass(frozen=True)
class NoiseSpec:
    """Uncorrelated single-qubit noise of one kind and strength ``nu`` in [0, 1]."""

    kind: NoiseKind = NoiseKind.NONE
    nu: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", NoiseKind(self.kind))
        nu = float(self.nu)
        if not 0.0 <= nu <= 1.0 or math.isnan(nu):
            raise UsageError(f"noise strength must lie in [0, 1], got {self.nu!r}")
        if self.kind is NoiseKind.NONE and nu != 0.0:
            raise UsageError("noise kind 'none' requires nu = 0")
        object.__setattr__(self, "nu", nu)

    @property
    def transverse_factor(self) -> float:
        """Shrink factor applied to the x and y Pauli components."""
        return 1.0 - self.nu

    @property
    def longitudinal_factor(self) -> float:
        """Shrink factor applied to the z Pauli component."""
        return 1.0 - self.nu if self.kind is NoiseKind.DEPOLARIZING else 1.0


NOISELESS = NoiseSpec()


@dataclass(frozen=True)
class MeasurementDirection:
    x: float
    y: float
    z: float

    def __post_init__(self):
        for name in ("x", "y", "z"):
            object.__setattr__(self, name, float(getattr(self, name)))
        norm2 = self.x * self.x + self.y * self.y + self.z * self.z
        if abs(norm2 - 1.0) > _UNIT_TOL:
            raise UsageError(f"direction is not a unit vector (|v|^2 = {norm2!r})")

    @classmethod
    def from_angles(cls, theta: float, phi: float) -> "MeasurementDirection":
        st = math.sin(theta)
        return cls(st * math.cos(phi), st * math.sin(phi), math.cos(theta))

    @classmethod
    def normalized(cls, vector: Sequence[float]) -> "MeasurementDirection":
        v = np.asarray(vector, dtype=float)
        norm = float(np.linalg.norm(v))
        if norm == 0.0:
            raise UsageError("cannot normalize the zero vector")
        return cls(*(v / norm))

    @property
    def theta(self) -> float:
        return math.acos(min(1.0, max(-1.0, self.z)))

    @property
    def phi(self) -> float:
        if math.hypot(self.x, self.y) < _POLE_TOL:
            return 0.0
        return math.atan2(self.y, self.x)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])


def _validate_directions(arr: np.ndarray) -> None:
    norms = np.einsum("...i,...i->...", arr, arr)
    if not np.all(np.abs(norms - 1.0) <= _UNIT_TOL):
        worst = float(np.max(np.abs(norms - 1.0)))
        raise UsageError(f"measurement directions must be unit vectors (max |1 - |v|^2| = {worst:.3e})")


@dataclass(frozen=True, eq=False)
class MeasurementConfig:
    """Two measurement directions for each of ``N >= 2`` parties.

    ``directions[k, s]`` is the Cartesian unit vector party ``k`` measures for
    setting ``s``.  Accepts an ``(N, 2, 3)`` array-like or a sequence of pairs of
    :class:`MeasurementDirection`.
    """

    directions: np.ndarray = field(repr=False)

    def __post_init__(self):
        raw = self.directions
        if len(raw) and isinstance(raw[0], (tuple, list)) and raw[0] and isinstance(raw[0][0], MeasurementDirection):
            raw = [[d.as_array() for d in pair] for pair in raw]
        arr = np.array(raw, dtype=float)
        if arr.ndim != 3 or arr.shape[1:] != (2, 3):
            raise UsageError(f"expected directions of shape (N, 2, 3), got {arr.shape}")
        if arr.shape[0] < 2:
            raise UsageError("at least two parties are required")
        _validate_directions(arr)
        arr.setflags(write=False)
        object.__setattr__(self, "directions", arr)

    @property
    def n_parties(self) -> int:
        return self.directions.shape[0]

    def direction(self, party: int, setting: int) -> MeasurementDirection:
        x, y, z = self.directions[party, setting]
        return MeasurementDirection(x, y, z)

    @property
    def theta(self) -> np.ndarray:
        return np.arccos(np.clip(self.directions[..., 2], -1.0, 1.0))

    @property
    def phi(self) -> np.ndarray:
        x, y = self.directions[..., 0], self.directions[..., 1]
        phi = np.arctan2(y, x)
        return np.where(np.hypot(x, y) < _POLE_TOL, 0.0, phi)

    def __eq__(self, other):
        if not isinstance(other, MeasurementConfig):
            return NotImplemented
        return np.array_equal(self.directions, other.directions)

    def __hash__(self):
        return hash(self.directions.tobytes())

    def __repr__(self):
        return f"MeasurementConfig(n_parties={self.n_parties})"


def parity_indicator(n: int) -> int:
    """delta_n = 1 - n mod 2."""
    return (n + 1) % 2


def _settings_tuple(settings, n: int) -> tuple[int, ...]:
    bits = tuple(int(b) for b in settings)
    if len(bits) != n:
        raise UsageError(f"setting string has {len(bits)} bits, expected {n}")
    if any(b not in (0, 1) for b in bits):
        raise UsageError("settings must be 0 or 1")
    return bits


def ghz_full_correlation(config: MeasurementConfig, noise: NoiseSpec, settings: Sequence[int]) -> float:
    """Full N-party correlation ``E(s)`` of the (noisy) GHZ state."""
    n = config.n_parties
    bits = _settings_tuple(settings, n)
    theta, phi = config.theta, config.phi
    chosen_t = np.array([theta[k, s] for k, s in enumerate(bits)])
    chosen_p = np.array([phi[k, s] for k, s in enumerate(bits)])
    transverse = math.cos(chosen_p.sum()) * float(np.prod(np.sin(chosen_t)))
    longitudinal = parity_indicator(n) * float(np.prod(np.cos(chosen_t)))
    return (noise.transverse_factor**n) * transverse + (noise.longitudinal_factor**n) * longitudinal


def ghz_restricted_correlation(
    config: MeasurementConfig, noise: NoiseSpec, subset: Iterable[int], settings: Sequence[int]
) -> float:
    """Correlation of the outcomes of a proper nonempty subset of parties.

    ``subset`` holds 0-based party indices; ``settings[i]`` belongs to the
    ``i``-th party of ``sorted(subset)``.
    """
    n = config.n_parties
    parties = sorted(int(k) for k in subset)
    if len(set(parties)) != len(parties) or any(k < 0 or k >= n for k in parties):
        raise UsageError(f"invalid subset {parties} for {n} parties")
    if not parties or len(parties) == n:
        raise UsageError("restricted correlations need a proper nonempty subset")
    bits = _settings_tuple(settings, len(parties))
    size = len(parties)
    if not parity_indicator(size):
        return 0.0
    theta = config.theta
    value = float(np.prod([math.cos(theta[k, s]) for k, s in zip(parties, bits)]))
    return (noise.longitudinal_factor**size) * value


def bell_state_correlation(theta1: float, phi1: float, theta2: float, phi2: float) -> float:
    """Two-qubit correlation for |Phi+> = (|00> + |11>)/sqrt(2)."""
    return math.cos(theta1) * math.cos(theta2) + math.sin(theta1) * math.sin(theta2) * math.cos(phi1 + phi2)


# -- batched evaluation ------------------------------------------------------


def as_direction_batch(directions) -> np.ndarray:
    """Return an ``(n, N, 2, 3)`` float array; a single config gains a batch axis."""
    if isinstance(directions, MeasurementConfig):
        directions = directions.directions
    arr = np.asarray(directions, dtype=float)
    if arr.ndim == 3:
        arr = arr[None]
    if arr.ndim != 4 or arr.shape[2:] != (2, 3):
        raise UsageError(f"expected directions of shape (n, N, 2, 3), got {arr.shape}")
    if arr.shape[1] < 2:
        raise UsageError("at least two parties are required")
    return arr


def _kron_batch(factors: np.ndarray) -> np.ndarray:
    """Batched little-endian Kronecker product over the party axis.

    ``factors`` has shape (n, N, d); the result has shape (n, d**N) with party
    ``k`` the ``k``-th least significant base-d digit.
    """
    n, n_parties, d = factors.shape
    out = np.ones((n, 1), dtype=factors.dtype)
    for k in range(n_parties):
        out = (factors[:, k, :, None] * out[:, None, :]).reshape(n, -1)
    return out


def _transverse_products(batch: np.ndarray) -> np.ndarray:
    w = batch[..., 0] + 1j * batch[..., 1]
    return _kron_batch(w).real


def full_correlations(directions, noise: NoiseSpec = NOISELESS) -> np.ndarray:
    """Full correlations for a batch of configs, shape (n, 2**N)."""
    batch = as_direction_batch(directions)
    n_parties = batch.shape[1]
    if n_parties > FULL_TABLE_LIMIT:
        raise ResourceLimitError(f"N = {n_parties} exceeds the full-table limit {FULL_TABLE_LIMIT}")
    values = (noise.transverse_factor**n_parties) * _transverse_products(batch)
    if parity_indicator(n_parties):
        values += (noise.longitudinal_factor**n_parties) * _kron_batch(batch[..., 2])
    return values


def correlation_tensors(directions, noise: NoiseSpec = NOISELESS) -> np.ndarray:
    """All 3**N correlations (empty, restricted and full) for a batch, ternary-indexed."""
    batch = as_direction_batch(directions)
    n, n_parties = batch.shape[:2]
    if n_parties > RESTRICTED_TABLE_LIMIT:
        raise ResourceLimitError(
            f"N = {n_parties} exceeds the restricted-table limit {RESTRICTED_TABLE_LIMIT}"
        )
    lz = noise.longitudinal_factor
    factors = np.empty((n, n_parties, 3))
    factors[..., 0] = 1.0
    factors[..., 1:] = lz * batch[..., 2]
    tensor = _kron_batch(factors)
    tensor[:, ix.subset_sizes(n_parties) % 2 == 1] = 0.0
    tensor[:, ix.full_index(n_parties)] += (noise.transverse_factor**n_parties) * _transverse_products(batch)
    return tensor


@dataclass(frozen=True, eq=False)
class CorrelationTable:
    """Full correlations plus, optionally, all restricted ones.

    ``full[i]`` is ``E(s)`` for the little-endian setting integer ``i``.
    ``tensor`` (length ``3**N``) holds every correlation in ternary encoding,
    the empty-subset entry ``tensor[0] = 1`` included.
    """

    n_parties: int
    full: np.ndarray = field(repr=False)
    tensor: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        n = int(self.n_parties)
        if n < 1:
            raise UsageError("n_parties must be positive")
        full = np.array(self.full, dtype=float)
        if full.shape != (2**n,):
            raise UsageError(f"full correlations must have shape ({2**n},), got {full.shape}")
        if np.any(np.abs(full) > 1.0 + _UNIT_TOL):
            raise UsageError("correlations must lie in [-1, 1]")
        full.setflags(write=False)
        object.__setattr__(self, "n_parties", n)
        object.__setattr__(self, "full", full)
        if self.tensor is not None:
            tensor = np.array(self.tensor, dtype=float)
            if tensor.shape != (3**n,):
                raise UsageError(f"tensor must have shape ({3**n},), got {tensor.shape}")
            if tensor[0] != 1.0:
                raise UsageError("empty-subset correlation must equal 1")
            if np.any(np.abs(tensor) > 1.0 + _UNIT_TOL):
                raise UsageError("correlations must lie in [-1, 1]")
            if not np.array_equal(tensor[ix.full_index(n)], full):
                raise UsageError("tensor and full correlations disagree")
            tensor.setflags(write=False)
            object.__setattr__(self, "tensor", tensor)

    @classmethod
    def from_tensor(cls, tensor) -> "CorrelationTable":
        tensor = np.asarray(tensor, dtype=float)
        n = round(math.log(tensor.size, 3))
        if 3**n != tensor.size:
            raise UsageError("tensor length is not a power of three")
        return cls(n, tensor[ix.full_index(n)], tensor)

    @property
    def has_restricted(self) -> bool:
        return self.tensor is not None

    def value(self, settings: Sequence[int]) -> float:
        bits = _settings_tuple(settings, self.n_parties)
        return float(self.full[ix.bits_to_int(bits)])

    def restricted(self, subset: Iterable[int], settings: Sequence[int]) -> float:
        """Correlation over ``subset`` (0-based parties, settings aligned with sorted order).

        The empty subset returns 1 and the full set the full correlation.
        """
        if self.tensor is None:
            raise UsageError("table was built without restricted correlations")
        parties = sorted(int(k) for k in subset)
        if any(k < 0 or k >= self.n_parties for k in parties) or len(set(parties)) != len(parties):
            raise UsageError(f"invalid subset {parties}")
        bits = _settings_tuple(settings, len(parties))
        return float(self.tensor[ix.ternary_index(self.n_parties, parties, bits)])


def build_correlation_table(
    config: MeasurementConfig,
    noise: NoiseSpec = NOISELESS,
    restricted: bool = True,
) -> CorrelationTable:
    n = config.n_parties
    limit = RESTRICTED_TABLE_LIMIT if restricted else FULL_TABLE_LIMIT
    if n > limit:
        raise ResourceLimitError(f"N = {n} exceeds the table limit {limit}")
    if restricted:
        return CorrelationTable.from_tensor(correlation_tensors(config, noise)[0])
    return CorrelationTable(n, full_correlations(config, noise)[0])


def _outcome_map() -> np.ndarray:
    """(4, 3) map from one party's ternary digit to (setting, outcome) pairs."""
    out = np.zeros((2, 2, 3))
    signs = np.array([1.0, -1.0])  # outcome bit 0 -> +1, bit 1 -> -1
    out[:, :, 0] = 0.5
    out[0, :, 1] = 0.5 * signs
    out[1, :, 2] = 0.5 * signs
    return out.reshape(4, 3)


def tensor_to_probabilities(tensor: np.ndarray) -> np.ndarray:
    """Unclamped p(o|s) array of shape (2**N, 2**N) from a ternary correlation tensor."""
    tensor = np.asarray(tensor, dtype=float)
    n = round(math.log(tensor.size, 3))
    work = tensor.reshape((3,) * n)  # axis j holds digit n-1-j
    pmap = _outcome_map()
    for k in range(n):
        axis = n - 1 - k
        work = np.moveaxis(np.tensordot(pmap, work, axes=([1], [axis])), 0, axis)
    work = work.reshape((2, 2) * n)
    order = list(range(0, 2 * n, 2)) + list(range(1, 2 * n, 2))
    return work.transpose(order).reshape(2**n, 2**n)


def correlation_table_to_probabilities(table: CorrelationTable) -> np.ndarray:
    """Joint outcome distribution ``p[s, o]``.

    Rows are little-endian setting integers, columns little-endian outcome
    integers where bit ``k`` set means ``o_k = -1``.  Rounding noise up to
    ``1e-12`` is clamped away; anything below ``-1e-9`` means the table is not a
    valid set of correlations and raises :class:`ConsistencyError`.
    """
    if not table.has_restricted:
        raise UsageError("probabilities need the restricted correlations as well")
    probs = tensor_to_probabilities(table.tensor)
    if probs.min() < -_PROB_FAIL_TOL or probs.max() > 1.0 + _PROB_FAIL_TOL:
        raise ConsistencyError(
            f"correlations imply probabilities outside [0, 1] (min {probs.min():.3e}, max {probs.max():.3e})"
        )
    return np.clip(probs, 0.0, 1.0)
