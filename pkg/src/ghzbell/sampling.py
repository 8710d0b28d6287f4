"""Seeded samplers for measurement configurations.

Randomness contract: sample ``i`` of a sampler is a pure function of
``(seed, scheme, N, i)``.  Uniform variates are drawn from counter-based
Philox streams, one stream per block of :data:`BLOCK_SIZE` consecutive samples,
keyed by ``SeedSequence(seed, spawn_key=(domain, N, block))``.  Any split of
the sample range over workers therefore reproduces the same draws.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate

from .correlations import MeasurementConfig
from .exceptions import UsageError

BLOCK_SIZE = 4096
CDF_GRID_POINTS = 4096
LAMBDA_MAX = math.pi / 2


class Scheme(str, enum.Enum):
    RIM = "rim"
    ROM = "rom"
    PROM = "prom"


# Stream domains; the value only has to differ between kinds of draw.
_DOMAIN = {"rim": 1, "rom": 2, "prom-xy": 3, "prom-rotated": 4, "prom-perturbed": 5}
_WIDTH = {"rim": 4, "rom": 3, "prom-xy": 1, "prom-rotated": 1, "prom-perturbed": 3}

_Z_AXIS = (0.0, 0.0, 1.0)


@dataclass(frozen=True)
class SamplerSpec:
    """Which measurement distribution to draw from, for how many parties, with which seed.

    PROM needs exactly one of ``normal`` (shared plane normal, ``(0, 0, 1)`` for
    the xy-plane) or ``lambda_std`` (per-party perturbed normals, radians).
    """

    scheme: Scheme
    n_parties: int
    seed: int = 0
    normal: tuple[float, float, float] | None = None
    lambda_std: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        n = int(self.n_parties)
        if n < 2:
            raise UsageError("at least two parties are required")
        object.__setattr__(self, "n_parties", n)
        seed = int(self.seed)
        if not 0 <= seed < 2**64:
            raise UsageError("seed must be a 64-bit unsigned integer")
        object.__setattr__(self, "seed", seed)
        if self.scheme is Scheme.PROM:
            if (self.normal is None) == (self.lambda_std is None):
                raise UsageError("PROM needs exactly one of a common normal or a perturbation width")
        elif self.normal is not None or self.lambda_std is not None:
            raise UsageError(f"{self.scheme.value} takes neither a normal nor a perturbation")
        if self.normal is not None:
            v = np.asarray(self.normal, dtype=float)
            if v.shape != (3,) or abs(float(v @ v) - 1.0) > 1e-12:
                raise UsageError("normal must be a unit 3-vector")
            object.__setattr__(self, "normal", tuple(float(c) for c in v))
        if self.lambda_std is not None:
            std = float(self.lambda_std)
            if not std >= 0.0 or math.isinf(std):
                raise UsageError("lambda_std must be a finite non-negative angle")
            object.__setattr__(self, "lambda_std", std)

    @classmethod
    def prom_xy(cls, n_parties: int, seed: int = 0) -> "SamplerSpec":
        return cls(Scheme.PROM, n_parties, seed, normal=_Z_AXIS)

    @classmethod
    def prom_rotated(cls, n_parties: int, alpha: float, lam: float, seed: int = 0) -> "SamplerSpec":
        normal = (math.cos(alpha) * math.sin(lam), math.sin(alpha) * math.sin(lam), math.cos(lam))
        return cls(Scheme.PROM, n_parties, seed, normal=normal)

    @classmethod
    def prom_perturbed(cls, n_parties: int, lambda_std: float, seed: int = 0) -> "SamplerSpec":
        return cls(Scheme.PROM, n_parties, seed, lambda_std=lambda_std)

    @property
    def variant(self) -> str:
        """Sampler name used on the command line and in outputs."""
        if self.scheme is not Scheme.PROM:
            return self.scheme.value
        if self.lambda_std is not None:
            return "prom-perturbed"
        return "prom-xy" if self.normal == _Z_AXIS else "prom-rotated"

    def with_seed(self, seed: int) -> "SamplerSpec":
        return SamplerSpec(self.scheme, self.n_parties, seed, self.normal, self.lambda_std)

    def to_dict(self) -> dict:
        return {
            "scheme": self.scheme.value,
            "n_parties": self.n_parties,
            "seed": self.seed,
            "normal": list(self.normal) if self.normal is not None else None,
            "lambda_std": self.lambda_std,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SamplerSpec":
        normal = data.get("normal")
        return cls(
            data["scheme"],
            data["n_parties"],
            data.get("seed", 0),
            tuple(normal) if normal is not None else None,
            data.get("lambda_std"),
        )


# -- random streams -----------------------------------------------------------


def _block_uniforms(seed: int, domain: int, n_parties: int, block: int, width: int) -> np.ndarray:
    ss = np.random.SeedSequence(seed, spawn_key=(domain, n_parties, block))
    return np.random.Generator(np.random.Philox(ss)).random((BLOCK_SIZE, n_parties, width))


def uniforms(spec: SamplerSpec, start: int, count: int, variant: str | None = None) -> np.ndarray:
    """Uniform variates of shape (count, N, width) for samples start .. start+count-1."""
    if start < 0 or count < 0:
        raise UsageError("sample range must be non-negative")
    variant = variant or spec.variant
    domain, width, n = _DOMAIN[variant], _WIDTH[variant], spec.n_parties
    out = np.empty((count, n, width))
    pos = 0
    while pos < count:
        index = start + pos
        block, offset = divmod(index, BLOCK_SIZE)
        take = min(BLOCK_SIZE - offset, count - pos)
        out[pos : pos + take] = _block_uniforms(spec.seed, domain, n, block, width)[offset : offset + take]
        pos += take
    return out


# -- geometry -----------------------------------------------------------------


def _sphere_points(u_z: np.ndarray, u_phi: np.ndarray) -> np.ndarray:
    z = 2.0 * u_z - 1.0
    phi = 2.0 * math.pi * u_phi
    r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    return np.stack((r * np.cos(phi), r * np.sin(phi), z), axis=-1)


def _orthogonal_partner(v: np.ndarray, angle: np.ndarray) -> np.ndarray:
    """Unit vector orthogonal to ``v`` at ``angle`` within a frame built at ``v``."""
    ref = np.zeros_like(v)
    near_pole = np.abs(v[..., 2]) > 0.9
    ref[..., 0] = near_pole
    ref[..., 2] = ~near_pole
    t1 = ref - np.sum(ref * v, axis=-1, keepdims=True) * v
    t1 /= np.linalg.norm(t1, axis=-1, keepdims=True)
    t2 = np.cross(v, t1)
    return np.cos(angle)[..., None] * t1 + np.sin(angle)[..., None] * t2


def plane_directions(alpha, lam, chi) -> np.ndarray:
    """Orthogonal measurement pair in the plane perpendicular to ``n(alpha, lam)``.

    Inputs broadcast together; output has two extra axes (2, 3) for the setting
    and the Cartesian component.  The pair uses azimuths ``chi`` and
    ``chi + pi/2`` within the plane, and ``(Omega_0, Omega_1, n)`` is right-handed.
    """
    alpha, lam, chi = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (alpha, lam, chi)))
    phi = chi[..., None] + np.array([0.0, math.pi / 2])
    a, l = alpha[..., None], lam[..., None]
    sp, cp = np.sin(phi), np.cos(phi)
    x = sp * np.cos(l) * np.cos(a) + cp * np.sin(a)
    y = sp * np.cos(l) * np.sin(a) - cp * np.cos(a)
    z = -sp * np.sin(l)
    return np.stack((x, y, z), axis=-1)


def normal_from_angles(alpha, lam) -> np.ndarray:
    alpha, lam = np.broadcast_arrays(np.asarray(alpha, dtype=float), np.asarray(lam, dtype=float))
    return np.stack((np.cos(alpha) * np.sin(lam), np.sin(alpha) * np.sin(lam), np.cos(lam)), axis=-1)


def _normal_angles(normal) -> tuple[float, float]:
    x, y, z = normal
    lam = math.acos(min(1.0, max(-1.0, z)))
    alpha = math.atan2(y, x) if math.hypot(x, y) >= 1e-12 else 0.0
    return alpha, lam


# -- perturbed normals --------------------------------------------------------


def lambda_density(lam, lambda_std: float) -> np.ndarray:
    """Unnormalized polar-angle density cos(lam/2)^(4/lambda_std^2)."""
    return np.cos(np.asarray(lam, dtype=float) / 2.0) ** (4.0 / lambda_std**2)


@lru_cache(maxsize=64)
def lambda_cdf_grid(lambda_std: float) -> tuple[np.ndarray, np.ndarray]:
    """(grid, cdf) for inverse-CDF sampling of the perturbed polar angle on [0, pi/2].

    The support is cut where the density falls below ``exp(-72)`` of its peak so
    narrow distributions still get a dense grid.
    """
    upper = min(LAMBDA_MAX, 12.0 * lambda_std)
    total, _ = integrate.quad(lambda_density, 0.0, LAMBDA_MAX, args=(lambda_std,), epsabs=0.0, epsrel=1e-10)
    grid = np.linspace(0.0, upper, CDF_GRID_POINTS)
    nodes, weights = np.polynomial.legendre.leggauss(8)
    lo, hi = grid[:-1, None], grid[1:, None]
    pts = 0.5 * (hi - lo) * nodes[None, :] + 0.5 * (hi + lo)
    pieces = 0.5 * (hi[:, 0] - lo[:, 0]) * (lambda_density(pts, lambda_std) @ weights)
    cdf = np.concatenate(([0.0], np.cumsum(pieces))) / total
    cdf /= cdf[-1]
    cdf.setflags(write=False)
    grid.setflags(write=False)
    return grid, cdf


def sample_lambda(u: np.ndarray, lambda_std: float) -> np.ndarray:
    if lambda_std == 0.0:
        return np.zeros_like(u)
    grid, cdf = lambda_cdf_grid(float(lambda_std))
    return np.interp(u, cdf, grid)


# -- batched sampling ---------------------------------------------------------


def sample_batch(spec: SamplerSpec, start: int, count: int) -> dict:
    """Draw samples ``start .. start+count-1``.

    Returns a dict with ``directions`` of shape (count, N, 2, 3), plus ``chi``
    (aggregate angle, PROM-xy only) or ``normals`` (count, N, 3) where relevant.
    """
    u = uniforms(spec, start, count)
    variant = spec.variant
    out = {}
    if variant == "rim":
        out["directions"] = np.stack(
            (_sphere_points(u[..., 0], u[..., 1]), _sphere_points(u[..., 2], u[..., 3])), axis=-2
        )
    elif variant == "rom":
        first = _sphere_points(u[..., 0], u[..., 1])
        second = _orthogonal_partner(first, 2.0 * math.pi * u[..., 2])
        out["directions"] = np.stack((first, second), axis=-2)
    elif variant == "prom-xy":
        chi_k = 2.0 * math.pi * u[..., 0]
        c, s = np.cos(chi_k), np.sin(chi_k)
        zero = np.zeros_like(c)
        out["directions"] = np.stack(
            (np.stack((c, s, zero), axis=-1), np.stack((-s, c, zero), axis=-1)), axis=-2
        )
        out["chi"] = np.mod(chi_k.sum(axis=-1), 2.0 * math.pi)
    elif variant == "prom-rotated":
        alpha, lam = _normal_angles(spec.normal)
        out["directions"] = plane_directions(alpha, lam, 2.0 * math.pi * u[..., 0])
    else:
        alpha = 2.0 * math.pi * u[..., 0]
        lam = sample_lambda(u[..., 1], spec.lambda_std)
        out["directions"] = plane_directions(alpha, lam, 2.0 * math.pi * u[..., 2])
        out["normals"] = normal_from_angles(alpha, lam)
    return out


def sample_directions(spec: SamplerSpec, start: int, count: int) -> np.ndarray:
    return sample_batch(spec, start, count)["directions"]


# -- single-sample API ----------------------------------------------------------


def _require(spec: SamplerSpec, *variants: str) -> None:
    if spec.variant not in variants:
        raise UsageError(f"sampler {spec.variant} cannot be used here (expected {', '.join(variants)})")


def sample_rim(spec: SamplerSpec, index: int = 0) -> MeasurementConfig:
    _require(spec, "rim")
    return MeasurementConfig(sample_directions(spec, index, 1)[0])


def sample_rom(spec: SamplerSpec, index: int = 0) -> MeasurementConfig:
    _require(spec, "rom")
    return MeasurementConfig(sample_directions(spec, index, 1)[0])


def sample_prom_xy(spec: SamplerSpec, index: int = 0) -> tuple[MeasurementConfig, float]:
    """PROM in the xy-plane; also returns the aggregate angle sum(chi_k) mod 2 pi."""
    _require(spec, "prom-xy")
    batch = sample_batch(spec, index, 1)
    return MeasurementConfig(batch["directions"][0]), float(batch["chi"][0])


def sample_prom_rotated(spec: SamplerSpec, index: int = 0) -> MeasurementConfig:
    _require(spec, "prom-rotated", "prom-xy")
    alpha, lam = _normal_angles(spec.normal)
    u = uniforms(spec, index, 1, variant="prom-rotated")
    return MeasurementConfig(plane_directions(alpha, lam, 2.0 * math.pi * u[0, :, 0]))


def sample_perturbed_normals(spec: SamplerSpec, index: int = 0) -> tuple[MeasurementConfig, np.ndarray]:
    _require(spec, "prom-perturbed")
    batch = sample_batch(spec, index, 1)
    return MeasurementConfig(batch["directions"][0]), batch["normals"][0]
