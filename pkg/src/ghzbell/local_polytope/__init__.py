"""Local-polytope membership via deterministic strategies."""
from .membership import (
    DEFAULT_MAX_PARTIES,
    LOCAL_TOL,
    METHODS,
    PolytopeVerdict,
    is_local,
    is_local_correlation_basis,
)
from .strategies import DeterministicStrategy, enumerate_strategies

__all__ = [
    "DEFAULT_MAX_PARTIES",
    "LOCAL_TOL",
    "METHODS",
    "DeterministicStrategy",
    "PolytopeVerdict",
    "enumerate_strategies",
    "is_local",
    "is_local_correlation_basis",
]
