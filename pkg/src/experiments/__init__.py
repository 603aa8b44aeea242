"""
Experiment harness: phases, retrain oracle, ablation, sweep and the pipeline
"""
from .core import (
    RunContext,
    make_evaluator,
    prepare_context,
    repair_phase,
    restore_federation,
    retrain_phase,
    run_ablation,
    train_phase,
    unlearn_phase,
)
from .oracle import retrain_oracle
from .pipeline import CheckpointStore, check_phases, run_pipeline
from .sweep import run_sweep, sweep_point

__all__ = [
    "RunContext",
    "prepare_context",
    "make_evaluator",
    "restore_federation",
    "train_phase",
    "unlearn_phase",
    "repair_phase",
    "retrain_phase",
    "retrain_oracle",
    "run_ablation",
    "run_sweep",
    "sweep_point",
    "check_phases",
    "CheckpointStore",
    "run_pipeline",
]
