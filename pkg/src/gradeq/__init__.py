"""Gradient-statistics equalized losses for long-tailed classification.

Accumulates per-category positive/negative gradient magnitudes during
training and uses their ratio to rebalance the loss: ratio-weighted
BCE, calibrated softmax, and ratio-focused focal/quality-focal
variants, plus a small trainer, synthetic long-tail data, telemetry,
and matched-seed benchmark presets.
"""

from .data import Dataset, category_counts, load_csv, save_csv, split, synth_longtail
from .errors import (
    DimensionError,
    GradeqError,
    IngestionError,
    NumericError,
    ParameterError,
)
from .experiments import (
    ArmResult,
    BenchmarkSpec,
    arm_config,
    benchmark_dataset,
    compare_arms,
    imbalance_decay,
    mean_tail_accuracy,
    mean_tail_ratio,
    run_arm,
    sweep_mappings,
)
from .gradstats import (
    DEFAULT_MAP_GAMMA,
    DEFAULT_MAP_MU,
    MAPPING_KINDS,
    GradStats,
    MappingFn,
    map_ratio,
)
from .losses import (
    BASE_VARIANT,
    QUALITY_VARIANTS,
    SOFTMAX_FAMILY,
    STATS_VARIANTS,
    VARIANTS,
    LossConfig,
    LossOutput,
    QualityTargets,
    calibration_offsets,
    compose_objectness,
    evaluate_loss,
    focusing_terms,
    loss_terms,
    reweight_terms,
)
from .telemetry import (
    TELEMETRY_HEADER,
    TelemetryRecord,
    read_summary,
    read_telemetry,
    write_summary,
    write_telemetry,
)
from .trainer import (
    EvalReport,
    GradCheckReport,
    Model,
    TrainConfig,
    TrainResult,
    evaluate,
    grad_check,
    init_model,
    quartile_bounds,
    train,
)

__version__ = "0.1.0"
