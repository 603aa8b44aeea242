"""
Forgetting objectives on the departing client's train nodes

    npo    = mean_i (2/β) · log(1 + (p_θ(y_i) / p_ref(y_i))^β)
    margin = λ_m · mean_i max(0, (τ_pre + m) - CE_i)

Both are minimized during unlearning; each function returns the loss and
its gradient with respect to the flat parameter vector.
"""
from typing import Optional

import numpy as np
from scipy.special import expit, log_softmax, softmax

from ..exceptions import EmptyMaskError
from ..nn import GcnParams, GraphInputs, ParamLayout, backward, gcn_forward, predict_logits

REF_PROB_FLOOR = 1e-12


def _nodes(nodes) -> np.ndarray:
    nodes = np.asarray(nodes, dtype=np.int64)
    if nodes.size == 0:
        raise EmptyMaskError("objective over an empty node set")
    return nodes


def reference_log_probs(theta_ref: np.ndarray, layout: ParamLayout, inputs: GraphInputs, nodes) -> np.ndarray:
    """log p_ref(y) per node from the frozen model in inference mode, floored at 1e-12"""
    nodes = _nodes(nodes)
    logp = log_softmax(predict_logits(theta_ref, layout, inputs)[nodes], axis=1)
    return np.maximum(logp[np.arange(nodes.size), inputs.y[nodes]], np.log(REF_PROB_FLOOR))


def npo_from_logits(logits: np.ndarray, y: np.ndarray, nodes, ref_logp: np.ndarray,
                    beta: float) -> tuple[float, np.ndarray]:
    """NPO loss and dL/dlogits"""
    nodes = _nodes(nodes)
    rows = np.arange(nodes.size)
    logp = log_softmax(logits[nodes], axis=1)
    z = beta * (logp[rows, y[nodes]] - ref_logp)
    loss = float((2.0 / beta) * np.logaddexp(0.0, z).mean())

    # d/dlogits log p(y) = onehot - softmax
    dlogp = -softmax(logits[nodes], axis=1)
    dlogp[rows, y[nodes]] += 1.0
    grad = np.zeros_like(logits)
    grad[nodes] = (2.0 * expit(z) / nodes.size)[:, None] * dlogp
    return loss, grad


def margin_from_logits(logits: np.ndarray, y: np.ndarray, nodes, tau_pre: float,
                       margin: float, weight: float) -> tuple[float, np.ndarray, np.ndarray]:
    """Hinge loss, dL/dlogits and the per-node cross-entropies"""
    nodes = _nodes(nodes)
    rows = np.arange(nodes.size)
    logp = log_softmax(logits[nodes], axis=1)
    ce = -logp[rows, y[nodes]]
    gap = (tau_pre + margin) - ce
    active = gap > 0.0
    loss = float(weight * np.maximum(gap, 0.0).mean())

    grad = np.zeros_like(logits)
    if active.any():
        # d CE / dlogits = softmax - onehot; the hinge pushes CE up
        dce = softmax(logits[nodes], axis=1)
        dce[rows, y[nodes]] -= 1.0
        grad[nodes] = -(weight / nodes.size) * active[:, None] * dce
    return loss, grad, ce


def _forward(theta, layout, inputs, dropout, dropout_seed):
    return gcn_forward(GcnParams.unflatten(theta, layout), inputs, dropout=dropout, dropout_seed=dropout_seed)


def npo_loss(theta: np.ndarray, layout: ParamLayout, inputs: GraphInputs, nodes, ref_logp: np.ndarray,
             beta: float, dropout: float = 0.0, dropout_seed: Optional[int] = None) -> tuple[float, np.ndarray]:
    logits, cache = _forward(theta, layout, inputs, dropout, dropout_seed)
    loss, dlogits = npo_from_logits(logits, inputs.y, nodes, ref_logp, beta)
    return loss, backward(cache, dlogits).flatten()


def mia_margin_loss(theta: np.ndarray, layout: ParamLayout, inputs: GraphInputs, nodes, tau_pre: float,
                    margin: float, weight: float, dropout: float = 0.0,
                    dropout_seed: Optional[int] = None) -> tuple[float, np.ndarray]:
    logits, cache = _forward(theta, layout, inputs, dropout, dropout_seed)
    loss, dlogits, _ = margin_from_logits(logits, inputs.y, nodes, tau_pre, margin, weight)
    return loss, backward(cache, dlogits).flatten()
