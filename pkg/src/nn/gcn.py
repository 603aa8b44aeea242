"""
Two-layer GCN with hand-derived gradients

    H1     = ReLU(Â X W1 + b1)
    logits = Â · drop(H1) · W2 + b2

Dropout (inverted) follows the first ReLU and is active only when a
dropout seed is supplied.
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.special import log_softmax, softmax

from ..exceptions import EmptyMaskError, ShapeError
from ..models import Dataset, Split
from ..processors.graph import normalized_adjacency
from .params import GcnParams, ParamLayout, weight_mask


@dataclass(frozen=True, eq=False)
class GraphInputs:
    """Per-graph tensors that never change during training"""
    a_hat: sp.csr_matrix
    x: np.ndarray
    ax: np.ndarray  # Â X
    y: np.ndarray
    train_mask: np.ndarray
    val_mask: np.ndarray
    test_mask: np.ndarray

    @classmethod
    def from_arrays(cls, a_hat, x: np.ndarray, y: Optional[np.ndarray] = None,
                    train_mask=None, val_mask=None, test_mask=None) -> "GraphInputs":
        a_hat = sp.csr_matrix(a_hat, dtype=np.float64)
        x = np.asarray(x, dtype=np.float64)
        n = a_hat.shape[0]
        if a_hat.shape != (n, n) or x.ndim != 2 or x.shape[0] != n:
            raise ShapeError(f"Â {a_hat.shape} and X {x.shape} disagree")
        none = np.zeros(n, dtype=bool)
        return cls(
            a_hat=a_hat,
            x=x,
            ax=np.asarray(a_hat @ x),
            y=np.zeros(n, dtype=np.int64) if y is None else np.asarray(y, dtype=np.int64),
            train_mask=none if train_mask is None else np.asarray(train_mask, dtype=bool),
            val_mask=none if val_mask is None else np.asarray(val_mask, dtype=bool),
            test_mask=none if test_mask is None else np.asarray(test_mask, dtype=bool),
        )

    @classmethod
    def from_dataset(cls, ds: Dataset) -> "GraphInputs":
        return cls.from_arrays(normalized_adjacency(ds.graph), ds.x, ds.y,
                               ds.train_mask, ds.val_mask, ds.test_mask)

    @property
    def n(self) -> int:
        return self.a_hat.shape[0]

    def mask(self, split: Split) -> np.ndarray:
        return {
            Split.TRAIN: self.train_mask,
            Split.VAL: self.val_mask,
            Split.TEST: self.test_mask,
        }[Split(split)]


@dataclass(eq=False)
class ForwardCache:
    inputs: GraphInputs
    params: GcnParams
    z1: np.ndarray             # pre-activation of layer 1
    drop: Optional[np.ndarray]  # keep-mask scaled by 1/(1-p), None when inactive
    p2: np.ndarray             # Â · drop(H1)
    logits: np.ndarray


def gcn_forward(
    params: GcnParams,
    inputs: GraphInputs,
    dropout: float = 0.0,
    dropout_seed: Optional[int] = None,
) -> tuple[np.ndarray, ForwardCache]:
    """
    Forward pass.

    Args:
        params: GCN weights
        inputs: propagation matrix and features
        dropout: drop probability after the first ReLU
        dropout_seed: enables dropout (training mode) when given

    Returns:
        (n×C logits, cache for gcn_backward)
    """
    if inputs.ax.shape[1] != params.w1.shape[0]:
        raise ShapeError(f"X has {inputs.ax.shape[1]} features, W1 expects {params.w1.shape[0]}")
    if params.w1.shape[1] != params.w2.shape[0]:
        raise ShapeError(f"W1 {params.w1.shape} and W2 {params.w2.shape} disagree")

    z1 = inputs.ax @ params.w1 + params.b1
    h1 = np.maximum(z1, 0.0)

    drop = None
    if dropout_seed is not None and dropout > 0.0:
        rng = np.random.default_rng(dropout_seed)
        drop = (rng.random(h1.shape) >= dropout) / (1.0 - dropout)
        h1 = h1 * drop

    p2 = np.asarray(inputs.a_hat @ h1)
    logits = p2 @ params.w2 + params.b2
    return logits, ForwardCache(inputs=inputs, params=params, z1=z1, drop=drop, p2=p2, logits=logits)


def backward(cache: ForwardCache, dlogits: np.ndarray) -> GcnParams:
    """Parameter gradients given dL/dlogits"""
    params, inputs = cache.params, cache.inputs
    gw2 = cache.p2.T @ dlogits
    gb2 = dlogits.sum(axis=0)
    dh = np.asarray(inputs.a_hat @ (dlogits @ params.w2.T))  # Â is symmetric
    if cache.drop is not None:
        dh = dh * cache.drop
    dz1 = dh * (cache.z1 > 0.0)
    gw1 = inputs.ax.T @ dz1
    gb1 = dz1.sum(axis=0)
    return GcnParams(w1=gw1, b1=gb1, w2=gw2, b2=gb2)


def _selected(mask: np.ndarray) -> np.ndarray:
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        raise EmptyMaskError("loss mask selects no nodes")
    return idx


def masked_cross_entropy(logits: np.ndarray, y: np.ndarray, mask: np.ndarray) -> float:
    """Mean over masked nodes of -log softmax(logits)[y]"""
    idx = _selected(mask)
    logp = log_softmax(logits[idx], axis=1)
    return float(-logp[np.arange(idx.size), y[idx]].mean())


def cross_entropy_grad(logits: np.ndarray, y: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """dL/dlogits of masked_cross_entropy"""
    idx = _selected(mask)
    grad = np.zeros_like(logits)
    probs = softmax(logits[idx], axis=1)
    probs[np.arange(idx.size), y[idx]] -= 1.0
    grad[idx] = probs / idx.size
    return grad


def gcn_backward(cache: ForwardCache, y: np.ndarray, mask: np.ndarray, weight_decay: float) -> np.ndarray:
    """
    Flat gradient of masked cross-entropy + (λ/2)·‖W‖² (weights only, no biases).
    """
    grads = backward(cache, cross_entropy_grad(cache.logits, y, mask)).flatten()
    if weight_decay:
        theta = cache.params.flatten()
        grads += weight_decay * weight_mask(cache.params.layout) * theta
    return grads


def predict_logits(theta: np.ndarray, layout: ParamLayout, inputs: GraphInputs) -> np.ndarray:
    """Inference-mode logits (no dropout)"""
    logits, _ = gcn_forward(GcnParams.unflatten(theta, layout), inputs)
    return logits


def predict(theta: np.ndarray, layout: ParamLayout, inputs: GraphInputs) -> np.ndarray:
    return np.argmax(predict_logits(theta, layout, inputs), axis=1)


def node_losses(theta: np.ndarray, layout: ParamLayout, inputs: GraphInputs, nodes) -> np.ndarray:
    """Per-node cross-entropy in inference mode"""
    nodes = np.asarray(nodes, dtype=np.int64)
    logp = log_softmax(predict_logits(theta, layout, inputs)[nodes], axis=1)
    return -logp[np.arange(nodes.size), inputs.y[nodes]]
