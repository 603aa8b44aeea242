"""
Client-level unlearning: NPO and margin objectives, gradient correction,
clipping and drift projection
"""
from .fedgcv import (
    Correction,
    EpochLog,
    UnlearnResult,
    UnlearnState,
    clip_and_project,
    gradient_correct,
    retain_direction,
    run_unlearning,
    start_unlearning,
    unlearn_direction,
    unlearn_round,
)
from .objectives import mia_margin_loss, npo_loss, reference_log_probs

__all__ = [
    "npo_loss",
    "mia_margin_loss",
    "reference_log_probs",
    "UnlearnState",
    "Correction",
    "EpochLog",
    "UnlearnResult",
    "start_unlearning",
    "unlearn_direction",
    "retain_direction",
    "gradient_correct",
    "clip_and_project",
    "unlearn_round",
    "run_unlearning",
]
