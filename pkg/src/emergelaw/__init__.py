"""emergelaw: fit emergence laws to LLM checkpoint evaluations, extrapolate the
few-shot point of emergence with calibrated uncertainty, and measure how far
in advance (in FLOPs) emergence can be predicted."""

__version__ = "0.1.0"

from .analysis import (
    AdvanceReport,
    AdvanceRow,
    HoldoutSpec,
    ParamCountSummary,
    PredictionScore,
    SeriesComparison,
    SUCCESS_THRESHOLD_NATS,
    advance_sweep,
    apply_holdout,
    compare_series,
    map_prediction_to_params,
    prediction_error,
)
from .dataset import (
    Condition,
    Observation,
    TASK_PRESETS,
    TaskPreset,
    WeightScheme,
    compute_weights,
    estimate_flops,
    load_observations,
    observation_flops,
    save_observations,
    subset_schedule,
)
from .errors import (
    EmergelawError,
    IdentifiabilityError,
    ObservationParseError,
    TemperatureSelectionError,
    ValidationError,
)
from .fitting import (
    EmergencePrediction,
    FitResult,
    GridAxis,
    GridSpec,
    LawFitConfig,
    fit_emergence_law,
    fit_relu,
    fit_scaling_law,
    grid_digest,
    grid_search,
    refine,
    weighted_mse,
)
from .forms import (
    EmergenceLawParams,
    ExtrapolationConfig,
    LAW_FORMS,
    LOG_POWER,
    NO_FEWSHOT,
    POWER,
    ReluParams,
    ScalingLawParams,
    eval_elbow,
    eval_full_model,
    eval_relu,
    eval_scaling_law,
    invert_scaling_law,
)
from .synth import RecoveryReport, SynthSpec, generate, recovery_report
from .uncertainty import (
    BootstrapConfig,
    McmcConfig,
    UncertaintySummary,
    bootstrap_fit,
    interval_jaccard,
    mcmc_sample,
    select_temperature,
    summarize,
)
