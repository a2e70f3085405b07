"""Monte Carlo risk estimators and the double-descent sweep driver.

Each estimator repeats independent trials: draw a fresh training set,
fit the subset student, and evaluate one risk functional on fresh test
draws.  Trial t of an estimator with base seed b consumes only streams
derived from (b, t, ·), so trials are order-independent and may run in
parallel; aggregation always walks the trial-indexed result array in
index order, which makes every estimate bit-identical across thread
counts.  The DDLAB_THREADS environment variable caps the worker count
(0 means auto); the default is single-threaded.

The sweep driver pairs the estimates with the closed-form bound ends at
every subset size, deriving a distinct sub-seed per (subset size,
estimator) so records are independent.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import rng
from .gauss_model import (
    Activation,
    OodInputConfig,
    SpectrumBounds,
    TeacherModel,
    estimate_sigma_spectrum,
    sample_train,
)
from .least_squares import FeatureSubset, fit_subset, predict_batch
from .risk_theory import TheoryRecord, theory_sweep

_SPECTRUM_SAMPLES = 200_000


@dataclass(frozen=True)
class McConfig:
    """Trial budget and seeding for one estimator run."""

    trials: int
    test_points: int
    base_seed: int

    def __post_init__(self) -> None:
        if self.trials < 1:
            raise ValueError(f"trials must be >= 1, got {self.trials}")
        if self.test_points < 1:
            raise ValueError(f"test_points must be >= 1, got {self.test_points}")


@dataclass(frozen=True)
class McEstimate:
    """Sample mean over trials with its standard error."""

    mean: float
    std_error: float
    trials: int


def resolve_threads(threads: int | None = None) -> int:
    """Worker count: explicit argument, else DDLAB_THREADS, else 1."""
    if threads is None:
        raw = os.environ.get("DDLAB_THREADS", "1")
        try:
            threads = int(raw)
        except ValueError as exc:
            raise ValueError(f"DDLAB_THREADS must be an integer, got {raw!r}") from exc
    if threads < 0:
        raise ValueError(f"thread count must be >= 0, got {threads}")
    if threads == 0:
        threads = os.cpu_count() or 1
    return threads


def _run_trials(trial_fn: Callable[[int], float], trials: int, threads: int | None) -> np.ndarray:
    workers = resolve_threads(threads)
    out = np.empty(trials)
    if workers <= 1 or trials == 1:
        for t in range(trials):
            out[t] = trial_fn(t)
        return out
    with ThreadPoolExecutor(max_workers=workers) as pool:
        for t, value in enumerate(pool.map(trial_fn, range(trials))):
            out[t] = value
    return out


def _estimate(values: np.ndarray) -> McEstimate:
    trials = values.shape[0]
    se = float(np.std(values, ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
    return McEstimate(mean=float(np.mean(values)), std_error=se, trials=trials)


def _fit_trial(teacher: TeacherModel, n: int, subset: FeatureSubset, base_seed: int, t: int):
    train = sample_train(teacher, n, rng.derive_key(base_seed, t, 1))
    return fit_subset(train.X, train.y, subset, teacher.activation)


def _shifted_responses(
    X: np.ndarray, teacher: TeacherModel, g: np.random.Generator
) -> np.ndarray:
    noise = g.standard_normal(X.shape[0])
    signal = np.asarray(teacher.activation.apply(X @ teacher.w_star_ood))
    return 2.0 * signal - 1.0 + teacher.sigma_prime * noise


def mc_expected_risk(
    teacher: TeacherModel,
    n: int,
    subset: FeatureSubset,
    cfg: McConfig,
    threads: int | None = None,
) -> McEstimate:
    """Estimate E[(phi(x^T w_hat) - y)^2] over fresh teacher draws."""

    def trial(t: int) -> float:
        clf = _fit_trial(teacher, n, subset, cfg.base_seed, t)
        test = sample_train(teacher, cfg.test_points, rng.derive_key(cfg.base_seed, t, 2))
        diff = predict_batch(clf, test.X) - test.y
        return float(np.mean(diff * diff))

    return _estimate(_run_trials(trial, cfg.trials, threads))


def mc_ood_risk(
    teacher: TeacherModel,
    n: int,
    subset: FeatureSubset,
    ood_cfg: OodInputConfig,
    cfg: McConfig,
    threads: int | None = None,
) -> McEstimate:
    """Estimate the combined shifted-task risk of the rescaled student.

    The student output is mapped to 2*phi(x^T w_hat) - 1 and compared
    against z = 2*phi(x^T w_star_ood) - 1 + noise, summing the expected
    squared error under the training input law and under the shifted
    input law (test_points draws each).
    """

    def trial(t: int) -> float:
        clf = _fit_trial(teacher, n, subset, cfg.base_seed, t)
        total = 0.0
        for tag, scale in ((2, 1.0), (3, ood_cfg.scale)):
            g = rng.stream(cfg.base_seed, t, tag)
            X = scale * g.standard_normal((cfg.test_points, teacher.d))
            z = _shifted_responses(X, teacher, g)
            diff = 2.0 * predict_batch(clf, X) - 1.0 - z
            total += float(np.mean(diff * diff))
        return total

    return _estimate(_run_trials(trial, cfg.trials, threads))


def mc_weight_error(
    teacher: TeacherModel,
    n: int,
    subset: FeatureSubset,
    cfg: McConfig,
    threads: int | None = None,
) -> McEstimate:
    """Estimate E[||w_hat - w*||^2] over fresh training draws."""

    def trial(t: int) -> float:
        clf = _fit_trial(teacher, n, subset, cfg.base_seed, t)
        delta = clf.w_hat - teacher.w_star
        return float(delta @ delta)

    return _estimate(_run_trials(trial, cfg.trials, threads))


@dataclass(frozen=True)
class CurveRecord:
    """One subset size: closed-form ends plus the three estimates."""

    p: int
    theory: TheoryRecord
    mc_risk: McEstimate
    mc_ood: McEstimate
    mc_weight_err: McEstimate


@dataclass(frozen=True)
class RiskCurve:
    n: int
    d: int
    ood_scale: float
    config: McConfig
    records: tuple[CurveRecord, ...]


def prefix_schedule(d: int, p_min: int, p_max: int) -> list[FeatureSubset]:
    """Nested prefix subsets {0..p-1} for p in [p_min, p_max]."""
    if not 1 <= p_min <= p_max <= d:
        raise ValueError(f"need 1 <= p_min <= p_max <= d, got [{p_min}, {p_max}] with d={d}")
    return [FeatureSubset(indices=tuple(range(p)), d=d) for p in range(p_min, p_max + 1)]


def resolve_sweep_spectra(
    teacher: TeacherModel,
    ood_cfg: OodInputConfig,
    base_seed: int = 0,
) -> tuple[SpectrumBounds, SpectrumBounds]:
    """Eigenvalue ranges of the activation-gradient covariances.

    Identity activation admits the analytic pair (1, scale^2); any
    other activation falls back to Monte Carlo spectrum estimates
    seeded from base_seed.
    """
    if teacher.activation is Activation.IDENTITY:
        s2 = ood_cfg.scale * ood_cfg.scale
        return SpectrumBounds(1.0, 1.0), SpectrumBounds(s2, s2)
    id_spectrum = estimate_sigma_spectrum(
        teacher, 1.0, _SPECTRUM_SAMPLES, rng.derive_key(base_seed, 0, 8)
    )
    ood_spectrum = estimate_sigma_spectrum(
        teacher, ood_cfg.scale, _SPECTRUM_SAMPLES, rng.derive_key(base_seed, 0, 9)
    )
    return id_spectrum, ood_spectrum


def dd_sweep(
    teacher: TeacherModel,
    n: int,
    subsets: Sequence[FeatureSubset],
    ood_cfg: OodInputConfig,
    cfg: McConfig,
    threads: int | None = None,
) -> RiskCurve:
    """Full curve: theory ends plus the three estimators per subset.

    The estimator at subset size p with tag k runs under the sub-seed
    derive_key(base_seed, p, k), k = 1 for risk, 2 for the shifted
    task, 3 for weight error, so every (p, estimator) pair has an
    independent stream family.
    """
    spectra = resolve_sweep_spectra(teacher, ood_cfg, cfg.base_seed)
    theory = theory_sweep(teacher, subsets, n, spectra)
    records = []
    for subset, th in zip(subsets, theory.records):
        def sub(k: int, p: int = subset.p) -> McConfig:
            return McConfig(
                trials=cfg.trials,
                test_points=cfg.test_points,
                base_seed=rng.derive_key(cfg.base_seed, p, k),
            )

        records.append(
            CurveRecord(
                p=subset.p,
                theory=th,
                mc_risk=mc_expected_risk(teacher, n, subset, sub(1), threads),
                mc_ood=mc_ood_risk(teacher, n, subset, ood_cfg, sub(2), threads),
                mc_weight_err=mc_weight_error(teacher, n, subset, sub(3), threads),
            )
        )
    return RiskCurve(
        n=n,
        d=teacher.d,
        ood_scale=ood_cfg.scale,
        config=cfg,
        records=tuple(records),
    )


def peak_subset_size(curve: RiskCurve, which: str = "risk") -> int:
    """Subset size at which an estimated curve attains its maximum."""
    if which not in ("risk", "ood"):
        raise ValueError(f"which must be 'risk' or 'ood', got {which!r}")
    values = [
        r.mc_risk.mean if which == "risk" else r.mc_ood.mean for r in curve.records
    ]
    return curve.records[int(np.argmax(values))].p
