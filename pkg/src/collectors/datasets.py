"""
Canonical dataset and partition files

Dataset JSON:
    {"format_version": 1, "n": int, "d": int, "C": int,
     "edges": [[u, v], ...], "x": [[f64; d]; n], "y": [int; n],
     "train_mask": [bool; n], "val_mask": [bool; n], "test_mask": [bool; n]}

Partition JSON: either a bare array of n integers or
    {"format_version": 1, "assignment": [int; n]}
"""
import json
import logging
from pathlib import Path
from typing import Optional

import numpy as np

from ..exceptions import ParseError, ValidationError
from ..models import FORMAT_VERSION, Dataset, SparseGraph

logger = logging.getLogger(__name__)

REQUIRED_KEYS = ("n", "d", "C", "edges", "x", "y", "train_mask", "val_mask", "test_mask")


def _read_json(path: Path):
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except OSError as e:
        raise ParseError(f"cannot read {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ParseError(f"{path} is not valid JSON: {e}") from e


def _check_version(payload: dict, path: Path) -> None:
    version = payload.get("format_version", FORMAT_VERSION)
    if version != FORMAT_VERSION:
        raise ParseError(f"{path}: unsupported format_version {version}")


def _as_array(payload: dict, key: str, dtype, path: Path) -> np.ndarray:
    try:
        return np.asarray(payload[key], dtype=dtype)
    except (TypeError, ValueError) as e:
        raise ParseError(f"{path}: field '{key}' has the wrong type: {e}") from e


def _as_mask(payload: dict, key: str, n: int, path: Path) -> np.ndarray:
    values = payload[key]
    if not isinstance(values, list) or not all(isinstance(v, bool) for v in values):
        raise ParseError(f"{path}: field '{key}' must be a list of booleans")
    mask = np.asarray(values, dtype=bool)
    if mask.shape != (n,):
        raise ValidationError(f"{key} has length {mask.size}, expected {n}")
    return mask


def load_dataset(path) -> Dataset:
    """
    Load and validate a canonical dataset file.

    Args:
        path: Path to the dataset JSON

    Returns:
        Validated Dataset (edges symmetrized and deduplicated)

    Raises:
        ParseError: malformed file
        ValidationError: mask overlap, label out of range, feature row mismatch
    """
    path = Path(path)
    payload = _read_json(path)
    if not isinstance(payload, dict):
        raise ParseError(f"{path}: top level must be an object")
    _check_version(payload, path)

    missing = [key for key in REQUIRED_KEYS if key not in payload]
    if missing:
        raise ParseError(f"{path}: missing keys {missing}")

    try:
        n, d, num_classes = int(payload["n"]), int(payload["d"]), int(payload["C"])
    except (TypeError, ValueError) as e:
        raise ParseError(f"{path}: n, d and C must be integers") from e

    edges = _as_array(payload, "edges", np.int64, path)
    if edges.size and (edges.ndim != 2 or edges.shape[1] != 2):
        raise ParseError(f"{path}: edges must be a list of [u, v] pairs")

    x = _as_array(payload, "x", np.float64, path)
    if x.ndim != 2 or x.shape[0] != n:
        raise ValidationError(f"feature matrix has {x.shape[0] if x.ndim else 0} rows, expected {n}")
    if x.shape[1] != d:
        raise ValidationError(f"feature matrix has {x.shape[1]} columns, expected d={d}")

    y = _as_array(payload, "y", np.int64, path)
    if y.shape != (n,):
        raise ValidationError(f"label vector has length {y.size}, expected {n}")

    dataset = Dataset(
        graph=SparseGraph.from_edges(n, edges),
        x=x,
        y=y,
        train_mask=_as_mask(payload, "train_mask", n, path),
        val_mask=_as_mask(payload, "val_mask", n, path),
        test_mask=_as_mask(payload, "test_mask", n, path),
        num_classes=num_classes,
    )
    dataset.validate()

    logger.info(
        f"Loaded {path.name}: n={n}, edges={dataset.graph.num_edges}, d={d}, C={num_classes}, "
        f"train/val/test={int(dataset.train_mask.sum())}/{int(dataset.val_mask.sum())}"
        f"/{int(dataset.test_mask.sum())}"
    )
    return dataset


def dataset_to_dict(dataset: Dataset, provenance: Optional[dict] = None) -> dict:
    """Canonical JSON payload of a dataset"""
    payload = {
        "format_version": FORMAT_VERSION,
        "n": dataset.n,
        "d": dataset.num_features,
        "C": dataset.num_classes,
        "edges": dataset.graph.edges.tolist(),
        "x": dataset.x.tolist(),
        "y": dataset.y.tolist(),
        "train_mask": dataset.train_mask.tolist(),
        "val_mask": dataset.val_mask.tolist(),
        "test_mask": dataset.test_mask.tolist(),
    }
    if provenance is not None:
        payload["provenance"] = provenance
    return payload


def save_dataset(dataset: Dataset, path, provenance: Optional[dict] = None) -> Path:
    """Write a dataset in the canonical format"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(dataset_to_dict(dataset, provenance), f)
    logger.info(f"Saved dataset to {path}")
    return path


def load_assignment(path, n: Optional[int] = None, num_parts: Optional[int] = None) -> np.ndarray:
    """
    Load a precomputed partition, verbatim.

    Args:
        path: Partition JSON (bare array or versioned object)
        n: expected length, checked when given
        num_parts: entries must lie in [0, num_parts) when given

    Returns:
        int64 assignment vector
    """
    path = Path(path)
    payload = _read_json(path)
    if isinstance(payload, dict):
        _check_version(payload, path)
        if "assignment" not in payload:
            raise ParseError(f"{path}: missing key 'assignment'")
        payload = payload["assignment"]
    if not isinstance(payload, list) or not all(isinstance(v, int) and not isinstance(v, bool) for v in payload):
        raise ParseError(f"{path}: assignment must be a list of integers")

    assignment = np.asarray(payload, dtype=np.int64)
    if n is not None and assignment.size != n:
        raise ValidationError(f"assignment has length {assignment.size}, expected {n}")
    if assignment.size and assignment.min() < 0:
        raise ValidationError("assignment contains negative part ids")
    if num_parts is not None and assignment.size and assignment.max() >= num_parts:
        raise ValidationError(f"assignment contains part ids outside [0, {num_parts})")
    return assignment


def save_assignment(assignment: np.ndarray, path) -> Path:
    """Write an assignment as a versioned partition file"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump({"format_version": FORMAT_VERSION, "assignment": [int(v) for v in assignment]}, f)
    return path
