"""
Per-sample loss and micro-averaged accuracy of a global model
"""
from typing import Sequence

import numpy as np
from scipy.special import log_softmax

from ..exceptions import EmptySplitError
from ..models import Split
from ..nn import GraphInputs, ParamLayout, node_losses, predict_logits


def sample_loss(theta: np.ndarray, layout: ParamLayout, inputs: GraphInputs, node: int) -> float:
    """Inference-mode cross-entropy of one node, the membership statistic"""
    return float(node_losses(theta, layout, inputs, [node])[0])


def global_accuracy(
    theta: np.ndarray,
    layout: ParamLayout,
    graphs: Sequence[GraphInputs],
    split: Split = Split.TEST,
) -> float:
    """
    Accuracy over the split nodes of every graph, counted node by node.

    Raises:
        EmptySplitError: no graph has a node in the split
    """
    correct = total = 0
    for inputs in graphs:
        idx = np.flatnonzero(inputs.mask(split))
        if idx.size == 0:
            continue
        pred = np.argmax(predict_logits(theta, layout, inputs)[idx], axis=1)
        correct += int(np.count_nonzero(pred == inputs.y[idx]))
        total += idx.size
    if total == 0:
        raise EmptySplitError(f"no {Split(split).value} nodes to evaluate")
    return correct / total


def global_loss(
    theta: np.ndarray,
    layout: ParamLayout,
    graphs: Sequence[GraphInputs],
    split: Split = Split.TRAIN,
) -> float:
    """Mean inference-mode cross-entropy over the split nodes of every graph"""
    total = 0.0
    count = 0
    for inputs in graphs:
        idx = np.flatnonzero(inputs.mask(split))
        if idx.size == 0:
            continue
        logp = log_softmax(predict_logits(theta, layout, inputs)[idx], axis=1)
        total += float(-logp[np.arange(idx.size), inputs.y[idx]].sum())
        count += idx.size
    if count == 0:
        raise EmptySplitError(f"no {Split(split).value} nodes to evaluate")
    return total / count


def split_metrics(theta: np.ndarray, layout: ParamLayout, graphs: Sequence[GraphInputs]) -> dict:
    """train/val/test accuracy and train loss; None for empty splits"""
    out = {}
    for split in (Split.TRAIN, Split.VAL, Split.TEST):
        try:
            out[f"{split.value}_acc"] = global_accuracy(theta, layout, graphs, split)
        except EmptySplitError:
            out[f"{split.value}_acc"] = None
    try:
        out["train_loss"] = global_loss(theta, layout, graphs, Split.TRAIN)
    except EmptySplitError:
        out["train_loss"] = None
    return out
