"""Post-hoc out-of-distribution scores over penultimate features.

All scores share one orientation: HIGHER means more in-distribution.
Statistics that depend on the training split (class means, shared
covariance, feature-space bases, softmax templates, activation
thresholds) are fitted once into IdStats and reused by every method.

Conventions applied throughout:
  - argmax/argmin ties resolve to the lowest index;
  - percentiles use the linear-interpolation definition;
  - the Mahalanobis covariance pools classes weighted by sample count;
  - the logit-space basis for the norm-ratio score comes from the
    uncentered second moment of the training features;
  - a predicted class with no training members gets no softmax
    template, and template matching skips it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import log_softmax, logsumexp, softmax

from .least_squares import pinv

METHODS = (
    "msp",
    "maxlogit",
    "energy",
    "react",
    "klmatch",
    "mahalanobis",
    "residual",
    "vim",
    "ash",
    "neco",
)

_TEMPLATE_FLOOR = 1e-12


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=float, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ModelOutputs:
    """Penultimate features with optional labels and logits."""

    features: np.ndarray
    labels: np.ndarray | None = None
    logits: np.ndarray | None = None

    def __post_init__(self) -> None:
        F = np.array(self.features, dtype=float, copy=True)
        if F.ndim != 2:
            raise ValueError(f"features must be a matrix, got ndim={F.ndim}")
        if not np.all(np.isfinite(F)):
            raise ValueError("features must be finite")
        F.setflags(write=False)
        object.__setattr__(self, "features", F)
        n = F.shape[0]
        if self.labels is not None:
            y = np.array(self.labels, copy=True)
            if y.shape != (n,):
                raise ValueError(f"labels must have shape ({n},), got {y.shape}")
            if not np.issubdtype(y.dtype, np.integer):
                raise ValueError("labels must be integers")
            if y.size and y.min() < 0:
                raise ValueError("labels must be >= 0")
            y.setflags(write=False)
            object.__setattr__(self, "labels", y)
        if self.logits is not None:
            L = np.array(self.logits, dtype=float, copy=True)
            if L.ndim != 2 or L.shape[0] != n:
                raise ValueError(f"logits must have shape ({n}, C)")
            if L.shape[1] < 2:
                raise ValueError(f"need at least 2 classes, got {L.shape[1]}")
            if not np.all(np.isfinite(L)):
                raise ValueError("logits must be finite")
            if self.labels is not None and self.labels.size and self.labels.max() >= L.shape[1]:
                raise ValueError("labels must lie in [0, C)")
            L.setflags(write=False)
            object.__setattr__(self, "logits", L)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def q(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class ClassifierHead:
    """Affine map from feature space to logits: l = W f + b."""

    W: np.ndarray
    b: np.ndarray

    def __post_init__(self) -> None:
        W = np.array(self.W, dtype=float, copy=True)
        b = np.array(self.b, dtype=float, copy=True).reshape(-1)
        if W.ndim != 2:
            raise ValueError(f"W must be a matrix, got ndim={W.ndim}")
        if b.shape != (W.shape[0],):
            raise ValueError(f"b must have shape ({W.shape[0]},), got {b.shape}")
        if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
            raise ValueError("head parameters must be finite")
        if W.shape[0] < 2:
            raise ValueError(f"need at least 2 classes, got {W.shape[0]}")
        W.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "b", b)

    @property
    def num_classes(self) -> int:
        return self.W.shape[0]

    def logits(self, features: np.ndarray) -> np.ndarray:
        return np.asarray(features, dtype=float) @ self.W.T + self.b


def check_head_consistency(
    outputs: ModelOutputs, head: ClassifierHead, tol: float = 1e-4
) -> None:
    """Require stored logits to match W f + b within tol."""
    if outputs.logits is None:
        return
    gap = float(np.max(np.abs(head.logits(outputs.features) - outputs.logits)))
    if gap > tol:
        raise ValueError(f"stored logits disagree with the head by {gap:.3e} (tol {tol:g})")


@dataclass(frozen=True)
class ScoreVector:
    """Per-sample scores for one method; higher means more ID."""

    scores: np.ndarray
    method: str

    def __post_init__(self) -> None:
        s = np.array(self.scores, dtype=float, copy=True).reshape(-1)
        if not np.all(np.isfinite(s)):
            raise ValueError(f"{self.method} produced non-finite scores")
        s.setflags(write=False)
        object.__setattr__(self, "scores", s)


@dataclass(frozen=True)
class IdStats:
    """Training-split statistics shared by the scoring methods.

    Fields that need training logits (vim_alpha, class_mean_softmax,
    class_present) are None when neither logits nor a head were
    available at fit time; methods that need them raise then.
    """

    num_classes: int
    class_means: np.ndarray
    precision: np.ndarray
    feature_offset: np.ndarray
    principal_basis: np.ndarray
    null_basis: np.ndarray
    etf_basis: np.ndarray
    react_threshold: float
    vim_alpha: float | None
    class_mean_softmax: np.ndarray | None
    class_present: np.ndarray | None


def _residual_norms(features: np.ndarray, stats: IdStats) -> np.ndarray:
    centered = np.asarray(features, dtype=float) - stats.feature_offset
    return np.linalg.norm(centered @ stats.null_basis, axis=1)


def fit_id_stats(train: ModelOutputs, head: ClassifierHead | None = None) -> IdStats:
    """Fit every training-split statistic the scores rely on.

    Training labels are required.  Logits come from the table when
    stored, otherwise from the head; with neither, the logit-dependent
    statistics are left unset.  When both are supplied they must agree.
    """
    if train.labels is None:
        raise ValueError("training labels are required to fit ID statistics")
    if head is not None:
        check_head_consistency(train, head)
    F = train.features
    y = train.labels
    n, q = F.shape

    logits = train.logits
    if logits is None and head is not None:
        logits = head.logits(F)
    if logits is not None:
        C = logits.shape[1]
    elif head is not None:
        C = head.num_classes
    else:
        C = int(y.max()) + 1
    if y.size and y.max() >= C:
        raise ValueError(f"labels must lie in [0, {C})")

    counts = np.bincount(y, minlength=C)
    if np.any(counts == 0):
        raise ValueError(f"class {int(np.argmin(counts))} has no training samples")
    means = np.zeros((C, q))
    for c in range(C):
        means[c] = F[y == c].mean(axis=0)
    centered_by_class = F - means[y]
    shared_cov = centered_by_class.T @ centered_by_class / n
    ridge = 1e-6 * float(np.trace(shared_cov)) / q
    precision = pinv(shared_cov + ridge * np.eye(q))

    if head is not None:
        offset = -pinv(head.W) @ head.b
    else:
        offset = F.mean(axis=0)
    centered = F - offset
    moment = centered.T @ centered / n
    vecs = np.linalg.eigh(moment)[1][:, ::-1]
    dim = q // 2
    principal, null = vecs[:, :dim], vecs[:, dim:]

    uncentered = F.T @ F / n
    etf = np.linalg.eigh(uncentered)[1][:, ::-1][:, : min(C, q)]

    threshold = float(np.percentile(F, 90.0))

    alpha = None
    templates = None
    present = None
    if logits is not None:
        norms = np.linalg.norm(centered @ null, axis=1)
        denom = float(np.sum(norms))
        # degenerate geometry: no residual direction carries train mass
        alpha = float(np.sum(np.max(logits, axis=1))) / denom if denom > 0 else 0.0
        probs = softmax(logits, axis=1)
        predicted = np.argmax(logits, axis=1)
        templates = np.full((C, C), np.nan)
        present = np.zeros(C, dtype=bool)
        for c in range(C):
            member = predicted == c
            if np.any(member):
                templates[c] = probs[member].mean(axis=0)
                present[c] = True
        templates = _frozen(templates)
        present.setflags(write=False)

    return IdStats(
        num_classes=C,
        class_means=_frozen(means),
        precision=_frozen(precision),
        feature_offset=_frozen(offset),
        principal_basis=_frozen(principal),
        null_basis=_frozen(null),
        etf_basis=_frozen(etf),
        react_threshold=threshold,
        vim_alpha=alpha,
        class_mean_softmax=templates,
        class_present=present,
    )


def _check_logits(logits: np.ndarray, min_classes: int = 1) -> np.ndarray:
    L = np.asarray(logits, dtype=float)
    if L.ndim != 2:
        raise ValueError(f"logits must be a matrix, got ndim={L.ndim}")
    if L.shape[1] < min_classes:
        raise ValueError(f"need at least {min_classes} classes, got {L.shape[1]}")
    if not np.all(np.isfinite(L)):
        raise ValueError("logits must be finite")
    return L


def score_msp(logits: np.ndarray) -> ScoreVector:
    """Maximum softmax probability."""
    L = _check_logits(logits, min_classes=2)
    return ScoreVector(scores=np.max(softmax(L, axis=1), axis=1), method="msp")


def score_maxlogit(logits: np.ndarray) -> ScoreVector:
    """Largest raw logit."""
    L = _check_logits(logits)
    return ScoreVector(scores=np.max(L, axis=1), method="maxlogit")


def score_energy(logits: np.ndarray, temperature: float = 1.0) -> ScoreVector:
    """Temperature-scaled log-sum-exp of the logits."""
    if temperature <= 0.0:
        raise ValueError(f"temperature must be > 0, got {temperature}")
    L = _check_logits(logits)
    return ScoreVector(
        scores=temperature * logsumexp(L / temperature, axis=1), method="energy"
    )


def score_react_energy(
    features: np.ndarray,
    head: ClassifierHead,
    stats: IdStats,
    temperature: float = 1.0,
) -> ScoreVector:
    """Energy after clipping activations at the fitted train percentile."""
    F = np.asarray(features, dtype=float)
    clipped = np.minimum(F, stats.react_threshold)
    inner = score_energy(head.logits(clipped), temperature)
    return ScoreVector(scores=inner.scores, method="react")


def score_klmatching(logits: np.ndarray, stats: IdStats) -> ScoreVector:
    """Negated smallest divergence to a per-class softmax template."""
    if stats.class_mean_softmax is None or stats.class_present is None:
        raise ValueError("template matching needs training logits or a head at fit time")
    if not np.any(stats.class_present):
        raise ValueError("no predicted class has a template")
    L = _check_logits(logits, min_classes=2)
    if L.shape[1] != stats.num_classes:
        raise ValueError(f"logits have {L.shape[1]} classes, stats have {stats.num_classes}")
    probs = softmax(L, axis=1)
    logprobs = log_softmax(L, axis=1)
    entropy_term = np.sum(np.where(probs > 0, probs * logprobs, 0.0), axis=1)
    templates = stats.class_mean_softmax[stats.class_present]
    cross = probs @ np.log(np.maximum(templates, _TEMPLATE_FLOOR)).T
    kl = entropy_term[:, None] - cross
    return ScoreVector(scores=-np.min(kl, axis=1), method="klmatch")


def score_mahalanobis(features: np.ndarray, stats: IdStats) -> ScoreVector:
    """Negated squared distance to the nearest class mean."""
    F = np.asarray(features, dtype=float)
    if F.ndim != 2 or F.shape[1] != stats.class_means.shape[1]:
        raise ValueError(f"features must have shape (n, {stats.class_means.shape[1]})")
    dists = np.empty((F.shape[0], stats.num_classes))
    for c in range(stats.num_classes):
        diff = F - stats.class_means[c]
        dists[:, c] = np.sum((diff @ stats.precision) * diff, axis=1)
    return ScoreVector(scores=-np.min(dists, axis=1), method="mahalanobis")


def score_residual(features: np.ndarray, stats: IdStats) -> ScoreVector:
    """Negated norm of the off-principal-subspace component."""
    return ScoreVector(scores=-_residual_norms(features, stats), method="residual")


def score_vim(features: np.ndarray, logits: np.ndarray, stats: IdStats) -> ScoreVector:
    """Log-sum-exp of the logits minus the scaled residual norm."""
    if stats.vim_alpha is None:
        raise ValueError("virtual-logit matching needs training logits or a head at fit time")
    L = _check_logits(logits)
    virtual = stats.vim_alpha * _residual_norms(features, stats)
    return ScoreVector(scores=logsumexp(L, axis=1) - virtual, method="vim")


def score_ash_p(
    features: np.ndarray,
    head: ClassifierHead,
    percentile: float = 90.0,
    temperature: float = 1.0,
) -> ScoreVector:
    """Energy after zeroing each sample's activations below its own percentile."""
    if not 0.0 <= percentile <= 100.0:
        raise ValueError(f"percentile must be in [0, 100], got {percentile}")
    F = np.array(np.asarray(features, dtype=float), copy=True)
    cut = np.percentile(F, percentile, axis=1)
    pruned = np.where(F < cut[:, None], 0.0, F)
    inner = score_energy(head.logits(pruned), temperature)
    return ScoreVector(scores=inner.scores, method="ash")


def score_neco(features: np.ndarray, logits: np.ndarray, stats: IdStats) -> ScoreVector:
    """Share of feature norm inside the class-count eigenspace, times the max logit.

    A zero feature vector scores 0 by convention.
    """
    F = np.asarray(features, dtype=float)
    L = _check_logits(logits)
    if L.shape[0] != F.shape[0]:
        raise ValueError("features and logits must have the same number of rows")
    full = np.linalg.norm(F, axis=1)
    inside = np.linalg.norm(F @ stats.etf_basis, axis=1)
    ratio = np.divide(inside, full, out=np.zeros_like(full), where=full > 0)
    return ScoreVector(scores=ratio * np.max(L, axis=1), method="neco")


def applicable_methods(
    eval_outputs: ModelOutputs, stats: IdStats, head: ClassifierHead | None
) -> list[str]:
    """Methods whose inputs are all available for this evaluation table."""
    have_logits = eval_outputs.logits is not None or head is not None
    out = []
    for method in METHODS:
        if method in ("react", "ash"):
            if head is not None:
                out.append(method)
        elif method in ("mahalanobis", "residual"):
            out.append(method)
        elif method == "klmatch":
            if have_logits and stats.class_mean_softmax is not None:
                out.append(method)
        elif method == "vim":
            if have_logits and stats.vim_alpha is not None:
                out.append(method)
        else:  # msp, maxlogit, energy, neco
            if have_logits:
                out.append(method)
    return out


def compute_score(
    method: str,
    eval_outputs: ModelOutputs,
    stats: IdStats,
    head: ClassifierHead | None = None,
    temperature: float = 1.0,
    ash_percentile: float = 90.0,
) -> ScoreVector:
    """Dispatch one method, deriving eval logits from the head if needed."""
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
    F = eval_outputs.features
    logits = eval_outputs.logits
    if logits is None and head is not None:
        logits = head.logits(F)
    if method == "msp":
        _need(logits, "logits or a classifier head")
        return score_msp(logits)
    if method == "maxlogit":
        _need(logits, "logits or a classifier head")
        return score_maxlogit(logits)
    if method == "energy":
        _need(logits, "logits or a classifier head")
        return score_energy(logits, temperature)
    if method == "react":
        _need(head, "a classifier head")
        return score_react_energy(F, head, stats, temperature)
    if method == "klmatch":
        _need(logits, "logits or a classifier head")
        return score_klmatching(logits, stats)
    if method == "mahalanobis":
        return score_mahalanobis(F, stats)
    if method == "residual":
        return score_residual(F, stats)
    if method == "vim":
        _need(logits, "logits or a classifier head")
        return score_vim(F, logits, stats)
    if method == "ash":
        _need(head, "a classifier head")
        return score_ash_p(F, head, ash_percentile, temperature)
    _need(logits, "logits or a classifier head")
    return score_neco(F, logits, stats)


def _need(block, description: str) -> None:
    if block is None:
        raise ValueError(f"this method needs {description}, which the table does not provide")
