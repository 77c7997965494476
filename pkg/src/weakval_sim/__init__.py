"""Weak-value estimation on simulated continuous measurement records.

A single qubit under continuous weak z-measurement, with exact conditioned
updates, stochastic trajectory integrators, closed-form post-selected
averages, an amplified-readout model, and dispersive circuit-QED homodyne
readout including two-quadrature state tomography.
"""

from .amplifier import (
    AmplifierModel,
    amplify,
    mc_weak_value_amplified,
    normalize_readout,
    state_given_v,
    wv_with_amplifier,
)
from .bayes import (
    GaussianLikelihood,
    bayes_expand_small,
    bayes_finite_time,
    bayes_update,
)
from .core import (
    AavWeakValue,
    PrePostSelection,
    PureState,
    QubitState,
    QubitStateDelta,
    aav_weak_value,
    fidelity,
    selection_probability,
    superop_d,
    superop_h,
    superop_m,
)
from .cqed import (
    CavityFields,
    CqedFiniteWv,
    CqedParams,
    CqedRates,
    TomographyResult,
    bayes_cqed,
    ensemble_coherence_cqed,
    mc_weak_value_cqed,
    modified_weak_value,
    rates,
    sample_cqed_output,
    steady_fields,
    step_cqed_qte,
    tomography,
    wv_cqed_finite,
    wv_cqed_short,
)
from .errors import (
    BadCavityWarning,
    ConfigError,
    DegenerateDenominator,
    DenominatorWarning,
    ExpansionDiverged,
    NoConvergence,
    NoSelections,
    OrthogonalSelection,
    StateInvariantViolation,
    StepSizeWarning,
    WeakvalError,
    ZeroLikelihood,
)
from .kernels import backend_name
from .trajectory import (
    DetectorCalibration,
    DriftComparison,
    EnsembleTrace,
    MeasurementStrength,
    Stepper,
    TrajectoryRecord,
    ensemble_coherence,
    fit_dephasing_rate,
    fit_loglog_slope,
    generate_trajectories,
    ito_conversion_check,
    normalize_current,
    sample_output,
    scalar_step,
    step_ito_euler,
    step_ito_milstein,
    step_stratonovich,
    strong_convergence_errors,
    write_trajectories_csv,
)
from .weak_values import (
    McWeakValue,
    ThetaCurve,
    WeakValueEstimate,
    mc_weak_value,
    pps_for_theta,
    wv_aav_linear,
    wv_bayes_general,
    wv_curve_peak,
    wv_finite_strength,
    wv_quadrature,
    wv_short_time,
    wv_theta_curve,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
