"""
Dataset ingestion: canonical dataset / partition files and synthetic data
"""
from .datasets import (
    dataset_to_dict,
    load_assignment,
    load_dataset,
    save_assignment,
    save_dataset,
)
from .synthetic import make_synthetic_dataset

__all__ = [
    "load_dataset",
    "save_dataset",
    "dataset_to_dict",
    "load_assignment",
    "save_assignment",
    "make_synthetic_dataset",
]
