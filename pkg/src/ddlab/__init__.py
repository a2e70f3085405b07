"""Double-descent risk laboratory and post-hoc OOD scoring engine."""

from __future__ import annotations

__version__ = "0.1.0"

from .gauss_model import (
    Activation,
    OodInputConfig,
    SampleSet,
    SpectrumBounds,
    TeacherModel,
    estimate_sigma_spectrum,
    prefix_teacher,
    response_z,
    sample_ood_inputs,
    sample_train,
)
from .least_squares import (
    FeatureSubset,
    SubsetClassifier,
    empirical_risk,
    fit_subset,
    pinv,
    predict,
    predict_batch,
    prefix_subset,
)
from .metrics import (
    AucResult,
    Nc1Report,
    SpectrumReport,
    auc,
    explained_variance_spectrum,
    nc1,
    nc1_ratio,
)
from .ood_scores import (
    METHODS,
    ClassifierHead,
    IdStats,
    ModelOutputs,
    ScoreVector,
    compute_score,
    fit_id_stats,
)
from .risk_mc import (
    CurveRecord,
    McConfig,
    McEstimate,
    RiskCurve,
    dd_sweep,
    mc_expected_risk,
    mc_ood_risk,
    mc_weight_error,
    peak_subset_size,
    prefix_schedule,
    resolve_sweep_spectra,
)
from .risk_theory import (
    BoundConvention,
    BoundInterval,
    InconsistentBoundsError,
    SubsetNorms,
    TheoryCurve,
    TheoryRecord,
    c_factor,
    ood_risk_bounds,
    risk_bounds,
    subset_norms,
    theory_sweep,
)

__all__ = [name for name in dir() if not name.startswith("_")]
