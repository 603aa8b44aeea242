"""
Model measurement: per-sample loss, accuracy and membership inference
"""
from .metrics import global_accuracy, global_loss, sample_loss, split_metrics
from .mia import MiaEvaluator, build_mia_sets, fit_threshold, mia_rate

__all__ = [
    "sample_loss",
    "global_accuracy",
    "global_loss",
    "split_metrics",
    "build_mia_sets",
    "fit_threshold",
    "mia_rate",
    "MiaEvaluator",
]
