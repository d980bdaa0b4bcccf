"""scikit-learn style wrappers around the solvers.

``fit`` takes a domain (a :class:`~torsionlab.geometry.ConvexDomain` or a
config mapping) instead of a feature matrix; ``predict`` takes an ``(n, 2)``
array of points and returns the solved field interpolated there.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .geometry import ConvexDomain, from_config
from .pde import locate_max, solve_ground_state, solve_torsion


def check_domain(domain) -> ConvexDomain:
    if isinstance(domain, ConvexDomain):
        return domain
    if isinstance(domain, dict):
        return from_config(domain)
    raise TypeError(f"expected a ConvexDomain or a config mapping, got {type(domain).__name__}")


def check_points(X) -> np.ndarray:
    X = check_array(X, dtype=np.float64, ensure_2d=True)
    if X.shape[1] != 2:
        raise ValueError(f"points must have 2 columns, got {X.shape[1]}")
    return X


class _FieldEstimator(BaseEstimator):
    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "field_")
        X = check_points(X)
        return self.field_.at(X[:, 0], X[:, 1])


class TorsionEstimator(_FieldEstimator):
    """Solve the torsion problem on a domain and evaluate it at points.

    >>> from torsionlab.geometry import rectangle
    >>> est = TorsionEstimator(target_h=1/32).fit(rectangle(4))
    >>> round(float(est.predict([[0.0, 0.5]])[0]), 4)
    0.1245
    """

    def __init__(self, target_h: float = 1 / 64, x_stretch: float = 1.0, tol: float = 1e-10):
        self.target_h = target_h
        self.x_stretch = x_stretch
        self.tol = tol

    def fit(self, X, y=None):
        domain = check_domain(X)
        self.field_ = solve_torsion(domain, self.target_h, tol=self.tol, x_stretch=self.x_stretch)
        self.max_ = locate_max(self.field_)
        self.n_iter_ = self.field_.meta["iterations"]
        return self


class GroundStateEstimator(_FieldEstimator):
    """Principal Dirichlet eigenpair; ``predict`` evaluates the eigenfunction (max 1)."""

    def __init__(self, target_h: float = 1 / 64, x_stretch: float = 1.0, method: str = "lanczos"):
        self.target_h = target_h
        self.x_stretch = x_stretch
        self.method = method

    def fit(self, X, y=None):
        domain = check_domain(X)
        self.field_, self.eigen_ = solve_ground_state(domain, self.target_h, method=self.method,
                                                      x_stretch=self.x_stretch)
        self.eigenvalue_ = self.eigen_.lam
        return self
