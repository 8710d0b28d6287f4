"""scikit-learn style wrappers.

Rows of ``X`` are measurement configurations flattened to ``N * 2 * 3``
direction components (party, setting, xyz).
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .correlations import NoiseSpec, correlation_tensors, full_correlations
from .inequalities import InequalityClass, margins, violation_flags
from .local_polytope import is_local_correlation_basis


def _directions(X, n_parties: int) -> np.ndarray:
    X = check_array(X, dtype=float)
    if X.shape[1] != 6 * n_parties:
        raise ValueError(f"expected {6 * n_parties} features for N = {n_parties}, got {X.shape[1]}")
    d = X.reshape(len(X), n_parties, 2, 3)
    if np.abs(np.linalg.norm(d, axis=-1) - 1.0).max() > 1e-9:
        raise ValueError("every direction must be a unit vector")
    return d


class GHZCorrelationTransformer(TransformerMixin, BaseEstimator):
    """Map measurement configurations to GHZ correlations.

    ``restricted=False`` returns the 2**N full correlations, otherwise the
    3**N ternary-indexed tensor.
    """

    def __init__(self, n_parties: int = 3, noise: str = "none", nu: float = 0.0, restricted: bool = False):
        self.n_parties = n_parties
        self.noise = noise
        self.nu = nu
        self.restricted = restricted

    def fit(self, X, y=None):
        _directions(X, self.n_parties)
        self.noise_ = NoiseSpec(self.noise, self.nu)
        self.n_features_in_ = 6 * self.n_parties
        return self

    def transform(self, X):
        check_is_fitted(self, "noise_")
        d = _directions(X, self.n_parties)
        if self.restricted:
            return correlation_tensors(d, self.noise_)
        return full_correlations(d, self.noise_)


class BellViolationDetector(ClassifierMixin, BaseEstimator):
    """Predict 1 when a configuration's GHZ statistics violate ``inequality_class``.

    Nothing is learned; ``fit`` validates parameters and records the classes.
    ``decision_function`` returns the best inequality value minus its
    classical bound; for the complete set it is the normalized violation of
    the separating inequality, 0 for local tables.
    """

    def __init__(self, n_parties: int = 3, inequality_class: str = "mabk", noise: str = "none", nu: float = 0.0, lp_method: str = "auto"):
        self.n_parties = n_parties
        self.inequality_class = inequality_class
        self.noise = noise
        self.nu = nu
        self.lp_method = lp_method

    def fit(self, X, y=None):
        _directions(X, self.n_parties)
        self.class_ = InequalityClass(self.inequality_class)
        self.noise_ = NoiseSpec(self.noise, self.nu)
        self.classes_ = np.array([0, 1])
        self.n_features_in_ = 6 * self.n_parties
        return self

    def decision_function(self, X):
        check_is_fitted(self, "class_")
        d = _directions(X, self.n_parties)
        if self.class_ is InequalityClass.COMPLETE_SET:
            tensors = correlation_tensors(d, self.noise_)
            out = np.empty(len(d))
            for i, t in enumerate(tensors):
                verdict = is_local_correlation_basis(t, method=self.lp_method)
                out[i] = verdict.violation if verdict.is_local is False else 0.0
            return out
        return margins(full_correlations(d, self.noise_), self.class_)

    def predict(self, X):
        check_is_fitted(self, "class_")
        d = _directions(X, self.n_parties)
        if self.class_ is InequalityClass.COMPLETE_SET:
            return (self.decision_function(X) > 0).astype(int)
        return violation_flags(full_correlations(d, self.noise_), self.class_).astype(int)
