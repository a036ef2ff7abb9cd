"""Proxy-based drift detection and calibration for low-cost NO2 sensor networks."""

__version__ = "0.1.0"

from .calibrate import (
    FACTORY_PARAMS,
    CalibrationParams,
    FitDiagnostics,
    apply_model,
    classify_diagnostics,
    fit_params,
    init_params,
)
from .config import (
    DriftConfig,
    HistogramConfig,
    NetworkConfig,
    SiteRole,
    SiteSpec,
    SpatialCorrectionConfig,
    load_network_config,
)
from .drift import AlarmState, DriftTestResult, alarm_update, drift_check
from .errors import (
    BinMismatch,
    ConfigError,
    DegenerateVariance,
    EmptyInput,
    EmptyWindow,
    IngestionError,
    InsufficientData,
    No2CalError,
    OrderingError,
    ScenarioError,
)
from .pipeline import RunResult, run_pipeline
from .report import (
    EvaluationReport,
    GridSpec,
    exceedance_counts,
    idw_grid,
    rolling_mab,
    summary_stats,
)
from .series import Channel, HourlySeries, align, hourly_average
from .simulate import (
    DriftEvent,
    FieldShiftEvent,
    ScenarioSpec,
    SharedErrorSpec,
    SimulatedNetwork,
    generate,
    nine_site_scenario,
    nine_site_sites,
    two_site_sites,
)
from .spatial import ErrorSeries, apply_es, compute_raw_error, damp_and_smooth, tune_sigmoid_k
from .stats import (
    EmpiricalDistribution,
    histogram,
    joint_range,
    kl_divergence,
    ks_two_sample,
    moment_match,
)

__all__ = [
    "AlarmState",
    "BinMismatch",
    "CalibrationParams",
    "Channel",
    "ConfigError",
    "DegenerateVariance",
    "DriftConfig",
    "DriftEvent",
    "DriftTestResult",
    "EmptyInput",
    "EmptyWindow",
    "EmpiricalDistribution",
    "ErrorSeries",
    "EvaluationReport",
    "FACTORY_PARAMS",
    "FieldShiftEvent",
    "FitDiagnostics",
    "GridSpec",
    "HistogramConfig",
    "HourlySeries",
    "IngestionError",
    "InsufficientData",
    "NetworkConfig",
    "No2CalError",
    "OrderingError",
    "RunResult",
    "ScenarioError",
    "ScenarioSpec",
    "SharedErrorSpec",
    "SimulatedNetwork",
    "SiteRole",
    "SiteSpec",
    "SpatialCorrectionConfig",
    "align",
    "apply_es",
    "apply_model",
    "classify_diagnostics",
    "compute_raw_error",
    "damp_and_smooth",
    "drift_check",
    "exceedance_counts",
    "fit_params",
    "generate",
    "histogram",
    "hourly_average",
    "idw_grid",
    "init_params",
    "joint_range",
    "kl_divergence",
    "ks_two_sample",
    "load_network_config",
    "moment_match",
    "nine_site_scenario",
    "nine_site_sites",
    "rolling_mab",
    "run_pipeline",
    "summary_stats",
    "tune_sigmoid_k",
    "two_site_sites",
    "alarm_update",
]
