"""
Synthetic contextual stochastic block model datasets

Used for smoke runs and tests; real datasets enter through the canonical
dataset file.
"""
import logging

import numpy as np

from ..models import Dataset, SparseGraph

logger = logging.getLogger(__name__)


def make_synthetic_dataset(
    n: int = 120,
    num_classes: int = 3,
    num_features: int = 16,
    p_in: float = 0.15,
    p_out: float = 0.01,
    feature_signal: float = 1.5,
    train_per_class: int = 10,
    val_fraction: float = 0.2,
    seed: int = 0,
) -> Dataset:
    """
    Sample a community graph with class-conditioned Gaussian features.

    Args:
        n: node count
        num_classes: number of classes (= communities)
        num_features: feature dimension
        p_in: edge probability inside a class
        p_out: edge probability across classes
        feature_signal: scale of the class mean vectors
        train_per_class: labeled training nodes per class
        val_fraction: fraction of the remaining nodes used for validation
        seed: RNG seed

    Returns:
        Validated Dataset
    """
    rng = np.random.default_rng(seed)
    y = rng.permutation(np.arange(n) % num_classes).astype(np.int64)

    rows, cols = np.triu_indices(n, k=1)
    same = y[rows] == y[cols]
    prob = np.where(same, p_in, p_out)
    keep = rng.random(rows.size) < prob
    edges = np.stack([rows[keep], cols[keep]], axis=1)

    means = rng.normal(0.0, 1.0, size=(num_classes, num_features)) * feature_signal
    x = means[y] + rng.normal(0.0, 1.0, size=(n, num_features))

    train_mask = np.zeros(n, dtype=bool)
    val_mask = np.zeros(n, dtype=bool)
    test_mask = np.zeros(n, dtype=bool)
    for c in range(num_classes):
        members = rng.permutation(np.flatnonzero(y == c))
        train = members[:train_per_class]
        rest = members[train_per_class:]
        n_val = int(round(val_fraction * rest.size))
        train_mask[train] = True
        val_mask[rest[:n_val]] = True
        test_mask[rest[n_val:]] = True

    dataset = Dataset(
        graph=SparseGraph.from_edges(n, edges),
        x=x,
        y=y,
        train_mask=train_mask,
        val_mask=val_mask,
        test_mask=test_mask,
        num_classes=num_classes,
    )
    dataset.validate()
    logger.debug(f"Synthetic dataset: n={n}, edges={dataset.graph.num_edges}, seed={seed}")
    return dataset
