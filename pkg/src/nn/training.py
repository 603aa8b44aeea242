"""
Local client training: seeded mini-batch descent over train nodes
"""
import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from ..config import TrainConfig
from .gcn import GraphInputs, gcn_backward, gcn_forward, masked_cross_entropy
from .optim import make_optimizer
from .params import GcnParams, ParamLayout

logger = logging.getLogger(__name__)

SeedLike = Union[int, Sequence[int], None]


@dataclass
class LocalUpdate:
    params: np.ndarray
    no_train_data: bool = False
    losses: list = field(default_factory=list)  # training-mode loss before each step

    @property
    def steps(self) -> int:
        return len(self.losses)

    @property
    def mean_loss(self) -> Optional[float]:
        return float(np.mean(self.losses)) if self.losses else None


def local_train(
    inputs: GraphInputs,
    start: np.ndarray,
    cfg: TrainConfig,
    layout: ParamLayout,
    seed: SeedLike = None,
    epochs: Optional[int] = None,
) -> LocalUpdate:
    """
    Run `epochs` shuffled passes over the train nodes, one optimizer step per
    batch of `cfg.batch` nodes. Propagation always uses the whole graph.

    Args:
        inputs: the client's graph tensors
        start: broadcast parameters (not modified)
        cfg: local training hyperparameters
        layout: parameter shapes
        seed: RNG seed, e.g. [global_seed, client_id, round]
        epochs: overrides cfg.epochs

    Returns:
        LocalUpdate; `no_train_data` is set and `start` returned when the
        client has no train nodes
    """
    layout.check(start)
    epochs = cfg.epochs if epochs is None else epochs
    train_idx = np.flatnonzero(inputs.train_mask)
    if train_idx.size == 0:
        return LocalUpdate(params=start.copy(), no_train_data=True)
    if epochs == 0:
        return LocalUpdate(params=start.copy())

    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    optimizer = make_optimizer(cfg.optimizer, cfg.lr)
    theta = start.copy()
    losses = []

    for _ in range(epochs):
        order = rng.permutation(train_idx)
        for begin in range(0, order.size, cfg.batch):
            mask = np.zeros(inputs.n, dtype=bool)
            mask[order[begin:begin + cfg.batch]] = True
            dropout_seed = int(rng.integers(2**63 - 1))
            logits, cache = gcn_forward(GcnParams.unflatten(theta, layout), inputs,
                                        dropout=cfg.dropout, dropout_seed=dropout_seed)
            losses.append(masked_cross_entropy(logits, inputs.y, mask))
            grad = gcn_backward(cache, inputs.y, mask, cfg.weight_decay)
            theta = optimizer.step(theta, grad)

    if not np.all(np.isfinite(theta)):
        logger.warning("Local training produced non-finite parameters")
    return LocalUpdate(params=theta, losses=losses)
