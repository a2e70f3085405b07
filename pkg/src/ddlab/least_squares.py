"""Subset least-squares students.

A student sees only a fixed subset T of the d input coordinates, fits
the minimum-norm least-squares solution on those columns, and predicts
phi(x^T w_hat) with the off-subset weights pinned to zero.  The
pseudoinverse is computed by SVD with a relative singular-value cutoff
so rank-deficient designs (including the interpolation window) resolve
to the minimum-norm solution.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gauss_model import Activation, SampleSet


@dataclass(frozen=True)
class FeatureSubset:
    """Strictly increasing coordinate indices within [0, d)."""

    indices: tuple[int, ...]
    d: int

    def __post_init__(self) -> None:
        idx = tuple(int(i) for i in self.indices)
        if len(idx) == 0:
            raise ValueError("subset must be non-empty")
        if self.d < 1:
            raise ValueError(f"d must be >= 1, got {self.d}")
        if any(not 0 <= i < self.d for i in idx):
            raise ValueError(f"indices must lie in [0, {self.d})")
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise ValueError("indices must be strictly increasing")
        object.__setattr__(self, "indices", idx)

    @property
    def p(self) -> int:
        return len(self.indices)


def prefix_subset(p: int, d: int) -> FeatureSubset:
    """The first p coordinates of a d-dimensional input."""
    return FeatureSubset(indices=tuple(range(p)), d=d)


@dataclass(frozen=True)
class SubsetClassifier:
    """Fitted student: full-width weights, zero outside its subset."""

    w_hat: np.ndarray
    subset: FeatureSubset
    activation: Activation

    def __post_init__(self) -> None:
        w = np.array(self.w_hat, dtype=float, copy=True).reshape(-1)
        if w.shape != (self.subset.d,):
            raise ValueError(f"w_hat must have shape ({self.subset.d},), got {w.shape}")
        off = np.ones(self.subset.d, dtype=bool)
        off[list(self.subset.indices)] = False
        if np.any(w[off] != 0.0):
            raise ValueError("w_hat must be zero outside the subset")
        w.setflags(write=False)
        object.__setattr__(self, "w_hat", w)


def _svd_cutoff(singular: np.ndarray, shape: tuple[int, int], rtol: float) -> float:
    if rtol < 0.0:
        raise ValueError(f"rtol must be >= 0, got {rtol}")
    if rtol == 0.0:
        rtol = np.finfo(float).eps * max(shape)
    return rtol * (float(singular[0]) if singular.size else 0.0)


def pinv(A: np.ndarray, rtol: float = 0.0) -> np.ndarray:
    """Moore-Penrose pseudoinverse via SVD.

    Singular values at or below rtol * s_max are treated as zero;
    rtol = 0 selects the default machine_eps * max(m, k).
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2:
        raise ValueError(f"A must be a matrix, got ndim={A.ndim}")
    if not np.all(np.isfinite(A)):
        raise ValueError("A must be finite")
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    keep = s > _svd_cutoff(s, A.shape, rtol)
    inv = np.zeros_like(s)
    inv[keep] = 1.0 / s[keep]
    return (Vt.T * inv) @ U.T


def fit_subset(
    X: np.ndarray,
    y: np.ndarray,
    subset: FeatureSubset,
    activation: Activation = Activation.IDENTITY,
    rtol: float = 0.0,
) -> SubsetClassifier:
    """Minimum-norm least-squares fit on the subset columns.

    The restricted weights equal pinv(X_T) @ y; the same singular-value
    cutoff as pinv applies, so wide designs return the minimum-norm
    interpolant.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).reshape(-1)
    if X.ndim != 2:
        raise ValueError(f"X must be a matrix, got ndim={X.ndim}")
    if X.shape[0] != y.shape[0]:
        raise ValueError(f"X has {X.shape[0]} rows but y has {y.shape[0]} entries")
    if subset.d != X.shape[1]:
        raise ValueError(f"subset is over d={subset.d} but X has d={X.shape[1]}")
    X_T = X[:, list(subset.indices)]
    U, s, Vt = np.linalg.svd(X_T, full_matrices=False)
    keep = s > _svd_cutoff(s, X_T.shape, rtol)
    coeff = np.zeros_like(s)
    coeff[keep] = (U.T @ y)[keep] / s[keep]
    w = np.zeros(subset.d)
    w[list(subset.indices)] = Vt.T @ coeff
    return SubsetClassifier(w_hat=w, subset=subset, activation=activation)


def predict(clf: SubsetClassifier, x: np.ndarray) -> float:
    """Student prediction phi(x^T w_hat) for a single input."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape != (clf.subset.d,):
        raise ValueError(f"x must have shape ({clf.subset.d},), got {x.shape}")
    return float(clf.activation.apply(float(x @ clf.w_hat)))


def predict_batch(clf: SubsetClassifier, X: np.ndarray) -> np.ndarray:
    """Vectorized predictions for an m x d input matrix."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != clf.subset.d:
        raise ValueError(f"X must have shape (m, {clf.subset.d})")
    idx = list(clf.subset.indices)
    return np.asarray(clf.activation.apply(X[:, idx] @ clf.w_hat[idx]), dtype=float)


def empirical_risk(clf: SubsetClassifier, data: SampleSet) -> float:
    """Mean squared error of the student on a sample set."""
    if data.n == 0:
        raise ValueError("empirical risk needs at least one sample")
    diff = predict_batch(clf, data.X) - data.y
    return float(np.mean(diff * diff))
