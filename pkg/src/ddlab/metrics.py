"""Separability and geometry metrics over score vectors and features.

AUC follows the rank-sum formulation with half credit for ties, so it
equals the probability that a uniformly random in-distribution score
exceeds a uniformly random shifted-distribution score, counting equal
pairs as one half.  The collapse ratio nc1 measures within-class
scatter against between-class scatter; the explained-variance spectrum
reports the eigenvalues of the centered feature covariance with a
marker at the class-count position.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .least_squares import pinv


@dataclass(frozen=True)
class AucResult:
    auc: float
    n_id: int
    n_ood: int


def _check_scores(scores: np.ndarray, name: str) -> np.ndarray:
    arr = np.asarray(scores, dtype=float).reshape(-1)
    if arr.size == 0:
        raise ValueError(f"{name} must be non-empty")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    return arr


def auc(id_scores: np.ndarray, ood_scores: np.ndarray) -> AucResult:
    """Probability a random ID score outranks a random OOD score.

    Computed from average ranks of the pooled sample (O(n log n)), which
    matches the pairwise count with ties scored 0.5 exactly.
    """
    a = _check_scores(id_scores, "id_scores")
    b = _check_scores(ood_scores, "ood_scores")
    ranks = rankdata(np.concatenate([a, b]), method="average")
    u = float(np.sum(ranks[: a.size])) - a.size * (a.size + 1) / 2.0
    return AucResult(auc=u / (a.size * b.size), n_id=a.size, n_ood=b.size)


def _check_features_labels(features: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray, np.ndarray, int]:
    F = np.asarray(features, dtype=float)
    y = np.asarray(labels)
    if F.ndim != 2:
        raise ValueError(f"features must be a matrix, got ndim={F.ndim}")
    if not np.all(np.isfinite(F)):
        raise ValueError("features must be finite")
    if y.shape != (F.shape[0],):
        raise ValueError(f"labels must have shape ({F.shape[0]},), got {y.shape}")
    if not np.issubdtype(y.dtype, np.integer):
        y = y.astype(int)
    if y.size and y.min() < 0:
        raise ValueError("labels must be >= 0")
    num_classes = int(y.max()) + 1 if y.size else 0
    return F, y, num_classes


@dataclass(frozen=True)
class Nc1Report:
    nc1: float
    per_class_counts: tuple[int, ...]


def nc1(features: np.ndarray, labels: np.ndarray) -> Nc1Report:
    """Collapse ratio Tr(S_W @ pinv(S_B)) / C.

    S_W is the sample-weighted within-class covariance; S_B averages
    the squared deviations of class means from the global feature mean
    over classes.  Every class in [0, C) must be present and C >= 2.
    """
    F, y, C = _check_features_labels(features, labels)
    if C < 2:
        raise ValueError(f"need at least 2 classes, got {C}")
    counts = np.bincount(y, minlength=C)
    if np.any(counts == 0):
        missing = int(np.argmin(counts))
        raise ValueError(f"class {missing} has no samples")
    n, q = F.shape
    means = np.zeros((C, q))
    for c in range(C):
        means[c] = F[y == c].mean(axis=0)
    centered = F - means[y]
    s_within = centered.T @ centered / n
    dev = means - F.mean(axis=0)
    s_between = dev.T @ dev / C
    value = float(np.trace(s_within @ pinv(s_between)) / C)
    return Nc1Report(nc1=value, per_class_counts=tuple(int(c) for c in counts))


def nc1_ratio(nc1_under: float, nc1_over: float) -> float:
    """Collapse-ratio quotient between two regimes; > 1 means the
    second regime separates classes more cleanly."""
    if not nc1_under > 0.0:
        raise ValueError(f"nc1_under must be > 0, got {nc1_under}")
    if not nc1_over > 0.0:
        raise ValueError(f"nc1_over must be > 0, got {nc1_over}")
    return nc1_under / nc1_over


@dataclass(frozen=True)
class SpectrumReport:
    """Eigenvalues of the centered feature covariance, descending."""

    eigenvalues: tuple[float, ...]
    explained_fraction: tuple[float, ...]
    marker_index: int


def explained_variance_spectrum(features: np.ndarray, num_classes: int) -> SpectrumReport:
    """Descending covariance eigenvalues with explained-variance shares.

    The marker index records the class-count position, where a
    collapsed feature geometry stops carrying variance.  Eigenvalues
    within numerical noise of zero are clamped to exactly zero.
    """
    F = np.asarray(features, dtype=float)
    if F.ndim != 2 or F.shape[1] == 0:
        raise ValueError("features must be a matrix with at least one column")
    if F.shape[0] < 2:
        raise ValueError(f"need at least 2 rows, got {F.shape[0]}")
    if not np.all(np.isfinite(F)):
        raise ValueError("features must be finite")
    if num_classes < 1:
        raise ValueError(f"num_classes must be >= 1, got {num_classes}")
    centered = F - F.mean(axis=0)
    cov = centered.T @ centered / F.shape[0]
    eigs = np.linalg.eigvalsh(cov)[::-1]
    floor = -1e-12 * max(1.0, float(eigs[0]))
    eigs = np.where((eigs < 0) & (eigs >= floor), 0.0, eigs)
    total = float(np.sum(eigs))
    if total <= 0.0:
        raise ValueError("feature covariance has no variance to explain")
    return SpectrumReport(
        eigenvalues=tuple(float(e) for e in eigs),
        explained_fraction=tuple(float(e / total) for e in eigs),
        marker_index=num_classes,
    )
