"""Gaussian teacher-student data model.

Training inputs are standard normal vectors in R^d; responses pass the
linear teacher signal through an activation and add centered Gaussian
noise.  Shifted-distribution inputs are isotropic Gaussians with a
different per-coordinate scale.  The module also estimates the spectrum
of the activation-weighted second-moment matrix

    Sigma = E[x x^T phi'(x^T w*)^2]

which the closed-form risk bounds consume.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from . import rng


class Activation(enum.Enum):
    """Link applied to the teacher signal and to student predictions."""

    IDENTITY = "identity"
    SIGMOID = "sigmoid"

    def apply(self, t: np.ndarray | float) -> np.ndarray | float:
        if self is Activation.IDENTITY:
            return t
        return expit(t)

    def derivative(self, t: np.ndarray | float) -> np.ndarray | float:
        if self is Activation.IDENTITY:
            return np.ones_like(np.asarray(t, dtype=float))
        s = expit(t)
        return s * (1.0 - s)


def _frozen_vector(values: np.ndarray | list[float], length: int, name: str) -> np.ndarray:
    arr = np.array(values, dtype=float, copy=True).reshape(-1)
    if arr.shape != (length,):
        raise ValueError(f"{name} must have shape ({length},), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class TeacherModel:
    """Ground-truth generator: y = phi(x^T w_star) + sigma * eps.

    sigma and sigma_prime are the noise levels of the training responses
    and of the shifted-distribution responses respectively.  Zero is
    accepted only as a noiseless limit for validation runs.
    w_star_ood defaults to w_star when not supplied.
    """

    d: int
    w_star: np.ndarray
    sigma: float
    sigma_prime: float
    activation: Activation = Activation.IDENTITY
    w_star_ood: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.d < 1:
            raise ValueError(f"d must be >= 1, got {self.d}")
        object.__setattr__(self, "w_star", _frozen_vector(self.w_star, self.d, "w_star"))
        if not (math.isfinite(self.sigma) and self.sigma >= 0.0):
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")
        if not (math.isfinite(self.sigma_prime) and self.sigma_prime >= 0.0):
            raise ValueError(f"sigma_prime must be >= 0, got {self.sigma_prime}")
        ood = self.w_star if self.w_star_ood is None else self.w_star_ood
        object.__setattr__(self, "w_star_ood", _frozen_vector(ood, self.d, "w_star_ood"))


def prefix_teacher(
    d: int,
    signal_dims: int,
    signal_norm: float,
    sigma: float,
    sigma_prime: float,
    activation: Activation = Activation.IDENTITY,
) -> TeacherModel:
    """Teacher whose signal is spread evenly over the first coordinates.

    With nested prefix subsets this makes the on/off-subset signal norms
    analytic: for a subset of the first p coordinates,
    ||w_T||^2 = signal_norm^2 * min(p, signal_dims) / signal_dims.
    """
    if not 1 <= signal_dims <= d:
        raise ValueError(f"signal_dims must be in [1, {d}], got {signal_dims}")
    if signal_norm < 0.0:
        raise ValueError(f"signal_norm must be >= 0, got {signal_norm}")
    w = np.zeros(d)
    w[:signal_dims] = signal_norm / math.sqrt(signal_dims)
    return TeacherModel(d=d, w_star=w, sigma=sigma, sigma_prime=sigma_prime, activation=activation)


@dataclass(frozen=True)
class SampleSet:
    """Immutable design matrix plus response vector."""

    X: np.ndarray
    y: np.ndarray

    def __post_init__(self) -> None:
        X = np.array(self.X, dtype=float, copy=True)
        y = np.array(self.y, dtype=float, copy=True).reshape(-1)
        if X.ndim != 2:
            raise ValueError(f"X must be a matrix, got ndim={X.ndim}")
        if X.shape[0] != y.shape[0]:
            raise ValueError(f"X has {X.shape[0]} rows but y has {y.shape[0]} entries")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class OodInputConfig:
    """Isotropic Gaussian input law with per-coordinate scale > 0."""

    scale: float = 1.0

    def __post_init__(self) -> None:
        if not (math.isfinite(self.scale) and self.scale > 0.0):
            raise ValueError(f"scale must be > 0, got {self.scale}")


def sample_train(teacher: TeacherModel, n: int, seed: int) -> SampleSet:
    """Draw n i.i.d. training pairs from the teacher.

    Draw order is normative for reproducibility: the n*d design entries
    first (row-major), then the n response-noise entries.  Noise is
    always drawn and scaled by sigma so the stream consumption does not
    depend on the noise level.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    g = rng.stream(seed)
    X = g.standard_normal((n, teacher.d))
    eps = g.standard_normal(n)
    y = np.asarray(teacher.activation.apply(X @ teacher.w_star)) + teacher.sigma * eps
    return SampleSet(X=X, y=y)


def sample_ood_inputs(d: int, m: int, config: OodInputConfig, seed: int) -> np.ndarray:
    """Draw m shifted-distribution inputs: scale * N(0, I_d)."""
    if d < 1:
        raise ValueError(f"d must be >= 1, got {d}")
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    return config.scale * rng.stream(seed).standard_normal((m, d))


def response_z(x: np.ndarray, teacher: TeacherModel, noise: float) -> float:
    """Shifted-task response z = 2*phi(x^T w_star_ood) - 1 + noise."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape != (teacher.d,):
        raise ValueError(f"x must have shape ({teacher.d},), got {x.shape}")
    return 2.0 * float(teacher.activation.apply(float(x @ teacher.w_star_ood))) - 1.0 + noise


@dataclass(frozen=True)
class SpectrumBounds:
    """Extreme eigenvalues of an activation-weighted second moment."""

    lambda_min: float
    lambda_max: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.lambda_min) and math.isfinite(self.lambda_max)):
            raise ValueError("spectrum bounds must be finite")
        if not 0.0 < self.lambda_min <= self.lambda_max:
            raise ValueError(
                f"need 0 < lambda_min <= lambda_max, got ({self.lambda_min}, {self.lambda_max})"
            )


_SPECTRUM_CHUNK = 100_000


def estimate_sigma_spectrum(
    teacher: TeacherModel,
    input_scale: float,
    samples: int,
    seed: int,
) -> SpectrumBounds:
    """Monte Carlo estimate of the spectrum of E[x x^T phi'(x^T w*)^2].

    Inputs follow scale * N(0, I_d); the derivative is evaluated against
    the teacher's training weights.  With the identity activation the
    matrix is exactly scale^2 * I_d, which the estimate approaches at
    rate 1/sqrt(samples).
    """
    if input_scale <= 0.0:
        raise ValueError(f"input_scale must be > 0, got {input_scale}")
    if samples < teacher.d:
        raise ValueError(f"need samples >= d={teacher.d} for a full-rank estimate, got {samples}")
    g = rng.stream(seed)
    second_moment = np.zeros((teacher.d, teacher.d))
    remaining = samples
    while remaining > 0:
        m = min(remaining, _SPECTRUM_CHUNK)
        X = input_scale * g.standard_normal((m, teacher.d))
        u = np.asarray(teacher.activation.derivative(X @ teacher.w_star))
        second_moment += X.T @ (X * (u * u)[:, None])
        remaining -= m
    second_moment /= samples
    second_moment = (second_moment + second_moment.T) / 2.0
    eigs = np.linalg.eigvalsh(second_moment)
    return SpectrumBounds(lambda_min=float(eigs[0]), lambda_max=float(eigs[-1]))
