"""Closed-form risk bounds for subset least-squares students.

The central quantity is the combinatorial factor c(n, p, sigma), which
is finite for p <= n-2 and p >= n+2 and +infinity on the interpolation
window {n-1, n, n+1}.  Expected in-distribution risk is sandwiched by
lambda_min(Sigma) * c + sigma^2 and lambda_max(Sigma) * c + sigma^2,
with equality for isotropic spectra.

For the shifted-task risk two bound conventions are provided.
PAPER_LITERAL reproduces the sandwich exactly as stated at its source:
it adds 2*sigma'^2 to the lower end but only sigma'^2 to the upper end
and evaluates c at sigma'.  For a point spectrum those ends invert,
which ood_risk_bounds surfaces as InconsistentBoundsError.
PROOF_CONSISTENT (the default) follows the algebra the sandwich is
derived from: the doubled response range contributes a factor 4 on the
quadratic term, c stays at the training noise level, and both ends
carry 2*sigma'^2.  Monte Carlo estimates match PROOF_CONSISTENT exactly
for isotropic spectra.

Infinite values are IEEE +inf flowing through ordinary float
arithmetic; no sentinel encodings are used.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .gauss_model import SpectrumBounds, TeacherModel
from .least_squares import FeatureSubset


class BoundConvention(enum.Enum):
    """Which shifted-task bound arithmetic to apply."""

    PROOF_CONSISTENT = "proof"
    PAPER_LITERAL = "paper"


class InconsistentBoundsError(ValueError):
    """Raised when a convention produces a lower end above the upper end."""


@dataclass(frozen=True)
class SubsetNorms:
    """Squared teacher-signal norms on and off a coordinate subset."""

    on_subset_sq: float
    off_subset_sq: float

    def __post_init__(self) -> None:
        if self.on_subset_sq < 0.0 or self.off_subset_sq < 0.0:
            raise ValueError("squared norms must be >= 0")


def subset_norms(w_star: np.ndarray, subset: FeatureSubset) -> SubsetNorms:
    """Split ||w*||^2 into on-subset and off-subset parts."""
    w = np.asarray(w_star, dtype=float).reshape(-1)
    if w.shape != (subset.d,):
        raise ValueError(f"w_star must have shape ({subset.d},), got {w.shape}")
    mask = np.zeros(subset.d, dtype=bool)
    mask[list(subset.indices)] = True
    on = float(w[mask] @ w[mask])
    off = float(w[~mask] @ w[~mask])
    return SubsetNorms(on_subset_sq=on, off_subset_sq=off)


@dataclass(frozen=True)
class BoundInterval:
    """Ordered pair of bound ends; either end may be +inf, never NaN."""

    lo: float
    hi: float

    def __post_init__(self) -> None:
        if math.isnan(self.lo) or math.isnan(self.hi):
            raise ValueError("bound ends must not be NaN")
        if self.lo > self.hi:
            raise ValueError(f"need lo <= hi, got ({self.lo}, {self.hi})")

    @property
    def is_finite(self) -> bool:
        return math.isfinite(self.lo) and math.isfinite(self.hi)


def c_factor(n: int, p: int, sigma: float, norms: SubsetNorms) -> float:
    """The risk factor c(n, p, sigma); +inf on the interpolation window.

    p <= n-2:  (p / (n-p-1)) * (off + sigma^2) + off
    |p - n| <= 1:  +inf
    p >= n+2:  (1 - n/p) * on + (n / (p-n-1)) * (off + sigma^2) + off
    where on = ||w*_T||^2 and off = ||w*_{T^c}||^2.

    The underparameterized coefficient is the trace of a p-dimensional
    inverse Wishart with n degrees of freedom, p/(n-p-1); the n/(n-p-1)
    sometimes quoted for this case double-counts the response dimension
    and fails the Monte Carlo weight-error oracle by a factor n/p.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    if not (math.isfinite(sigma) and sigma >= 0.0):
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    on, off = norms.on_subset_sq, norms.off_subset_sq
    noise = off + sigma * sigma
    if p <= n - 2:
        return (p / (n - p - 1)) * noise + off
    if p >= n + 2:
        return (1.0 - n / p) * on + (n / (p - n - 1)) * noise + off
    return math.inf


def risk_bounds(c: float, spectrum: SpectrumBounds, sigma: float) -> BoundInterval:
    """Sandwich on expected in-distribution risk: lambda * c + sigma^2."""
    if c < 0.0 or math.isnan(c):
        raise ValueError(f"c must be >= 0, got {c}")
    if sigma < 0.0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    s2 = sigma * sigma
    return BoundInterval(lo=spectrum.lambda_min * c + s2, hi=spectrum.lambda_max * c + s2)


def _ood_bound_ends(
    c: float,
    id_spectrum: SpectrumBounds,
    ood_spectrum: SpectrumBounds,
    sigma_prime: float,
    convention: BoundConvention,
) -> tuple[float, float]:
    sp2 = sigma_prime * sigma_prime
    lo_rate = id_spectrum.lambda_min + ood_spectrum.lambda_min
    hi_rate = id_spectrum.lambda_max + ood_spectrum.lambda_max
    if convention is BoundConvention.PROOF_CONSISTENT:
        return 4.0 * lo_rate * c + 2.0 * sp2, 4.0 * hi_rate * c + 2.0 * sp2
    return lo_rate * c + 2.0 * sp2, hi_rate * c + sp2


def ood_risk_bounds(
    c: float,
    id_spectrum: SpectrumBounds,
    ood_spectrum: SpectrumBounds,
    sigma_prime: float,
    convention: BoundConvention = BoundConvention.PROOF_CONSISTENT,
) -> BoundInterval:
    """Sandwich on the combined shifted-task risk under a convention.

    Raises InconsistentBoundsError when the convention's ends invert,
    which PAPER_LITERAL does for any point spectrum with sigma' > 0
    (its additive terms differ by sigma'^2 across the two ends).
    """
    if c < 0.0 or math.isnan(c):
        raise ValueError(f"c must be >= 0, got {c}")
    if sigma_prime < 0.0:
        raise ValueError(f"sigma_prime must be >= 0, got {sigma_prime}")
    lo, hi = _ood_bound_ends(c, id_spectrum, ood_spectrum, sigma_prime, convention)
    if lo > hi:
        raise InconsistentBoundsError(
            f"{convention.value} bound ends invert: lo={lo} > hi={hi} "
            f"(the additive terms differ by sigma_prime^2={sigma_prime**2})"
        )
    return BoundInterval(lo=lo, hi=hi)


@dataclass(frozen=True)
class TheoryRecord:
    """Closed-form bound ends at one subset size, both conventions.

    c is evaluated at the training noise sigma and c_shifted_noise at
    sigma'; ood_proof uses c and is always an ordered interval, while
    the literal ends use c_shifted_noise and are kept as raw floats
    because they may invert (the point-spectrum diagnostic).
    """

    p: int
    c: float
    c_shifted_noise: float
    risk: BoundInterval
    ood_proof: BoundInterval
    ood_paper_lo: float
    ood_paper_hi: float

    def ood_ends(self, convention: BoundConvention) -> tuple[float, float]:
        """The shifted-task ends under one convention, raw and unordered."""
        if convention is BoundConvention.PROOF_CONSISTENT:
            return self.ood_proof.lo, self.ood_proof.hi
        return self.ood_paper_lo, self.ood_paper_hi


@dataclass(frozen=True)
class TheoryCurve:
    n: int
    sigma: float
    sigma_prime: float
    id_spectrum: SpectrumBounds
    ood_spectrum: SpectrumBounds
    records: tuple[TheoryRecord, ...]


def theory_record(
    n: int,
    sigma: float,
    sigma_prime: float,
    norms: SubsetNorms,
    p: int,
    id_spectrum: SpectrumBounds,
    ood_spectrum: SpectrumBounds,
) -> TheoryRecord:
    """Bound ends at a single subset size under both conventions."""
    c_id = c_factor(n, p, sigma, norms)
    c_shift = c_factor(n, p, sigma_prime, norms)
    proof_lo, proof_hi = _ood_bound_ends(
        c_id, id_spectrum, ood_spectrum, sigma_prime, BoundConvention.PROOF_CONSISTENT
    )
    paper_lo, paper_hi = _ood_bound_ends(
        c_shift, id_spectrum, ood_spectrum, sigma_prime, BoundConvention.PAPER_LITERAL
    )
    return TheoryRecord(
        p=p,
        c=c_id,
        c_shifted_noise=c_shift,
        risk=risk_bounds(c_id, id_spectrum, sigma),
        ood_proof=BoundInterval(lo=proof_lo, hi=proof_hi),
        ood_paper_lo=paper_lo,
        ood_paper_hi=paper_hi,
    )


def theory_sweep(
    teacher: TeacherModel,
    subset_schedule: Sequence[FeatureSubset],
    n: int,
    spectra: tuple[SpectrumBounds, SpectrumBounds],
    sigma_prime: float | None = None,
) -> TheoryCurve:
    """Tabulate bound ends over an increasing schedule of subsets.

    spectra is the (training-law, shifted-law) pair of eigenvalue
    ranges.  sigma_prime defaults to the teacher's shifted noise level.
    Every record carries the ends of both conventions: the
    proof-consistent pair uses c(n, p, sigma) and the literal pair uses
    c(n, p, sigma').
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if len(subset_schedule) == 0:
        raise ValueError("subset_schedule must be non-empty")
    if sigma_prime is None:
        sigma_prime = teacher.sigma_prime
    if sigma_prime < 0.0:
        raise ValueError(f"sigma_prime must be >= 0, got {sigma_prime}")
    id_spectrum, ood_spectrum = spectra
    records = []
    last_p = 0
    for subset in subset_schedule:
        if subset.d != teacher.d:
            raise ValueError(f"subset is over d={subset.d}, teacher has d={teacher.d}")
        if subset.p <= last_p:
            raise ValueError("subset_schedule must be strictly increasing in p")
        last_p = subset.p
        norms = subset_norms(teacher.w_star, subset)
        records.append(
            theory_record(
                n, teacher.sigma, sigma_prime, norms, subset.p, id_spectrum, ood_spectrum
            )
        )
    return TheoryCurve(
        n=n,
        sigma=teacher.sigma,
        sigma_prime=sigma_prime,
        id_spectrum=id_spectrum,
        ood_spectrum=ood_spectrum,
        records=tuple(records),
    )
