from .ablation import AXES, AblationRow, ablate, axis_configs, best_row, write_ablation_table
from .config import ProbeConfig, TrainConfig
from .metrics import MetricsRecord, epoch_means, metrics_export, moving_average, read_metrics
from .optim import LearningRateSchedule, OptimizerState, adamw_step
from .probe import (
    ProbeReport,
    extract_features,
    extract_global_feature,
    linear_probe,
    probe_datasets,
    write_probe_report,
)
from .training import PreparedSample, PretrainResult, forward_loss, prepare_sample, pretrain, sample_loss

__all__ = [
    "AXES",
    "AblationRow",
    "ablate",
    "axis_configs",
    "best_row",
    "write_ablation_table",
    "ProbeConfig",
    "TrainConfig",
    "MetricsRecord",
    "epoch_means",
    "metrics_export",
    "moving_average",
    "read_metrics",
    "LearningRateSchedule",
    "OptimizerState",
    "adamw_step",
    "ProbeReport",
    "extract_features",
    "extract_global_feature",
    "linear_probe",
    "probe_datasets",
    "write_probe_report",
    "PreparedSample",
    "PretrainResult",
    "forward_loss",
    "prepare_sample",
    "pretrain",
    "sample_loss",
]
