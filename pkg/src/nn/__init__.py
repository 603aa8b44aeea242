"""
Two-layer GCN: parameters, forward/backward, optimizers and local training
"""
from .gcn import (
    ForwardCache,
    GraphInputs,
    backward,
    cross_entropy_grad,
    gcn_backward,
    gcn_forward,
    masked_cross_entropy,
    node_losses,
    predict,
    predict_logits,
)
from .optim import Adam, Sgd, make_optimizer
from .params import (
    GcnParams,
    ParamLayout,
    init_params,
    load_params,
    params_from_bytes,
    params_to_bytes,
    save_params,
    weight_mask,
)
from .training import LocalUpdate, local_train

__all__ = [
    "GcnParams",
    "ParamLayout",
    "init_params",
    "weight_mask",
    "params_to_bytes",
    "params_from_bytes",
    "save_params",
    "load_params",
    "GraphInputs",
    "ForwardCache",
    "gcn_forward",
    "backward",
    "gcn_backward",
    "masked_cross_entropy",
    "cross_entropy_grad",
    "predict_logits",
    "predict",
    "node_losses",
    "Sgd",
    "Adam",
    "make_optimizer",
    "LocalUpdate",
    "local_train",
]
