"""
Retrain-from-scratch baseline
"""
import logging
from typing import Sequence

from ..config import FedConfig
from ..federation import ServerState, init_server, run_rounds
from ..nn import ParamLayout

logger = logging.getLogger(__name__)


def retrain_oracle(clients: Sequence, layout: ParamLayout, cfg: FedConfig, exclude: Sequence[int]) -> ServerState:
    """
    Fresh initialization and cfg.rounds FedAvg rounds over the clients not
    in `exclude`. Excluded shards are never read.

    Args:
        clients: FederatedClient objects of the main run's partition
        layout: parameter shapes
        cfg: federation settings (same seed as the main run)
        exclude: departed client ids

    Returns:
        Final ServerState of the retained-only federation
    """
    excluded = set(exclude)
    retained = [c for c in clients if c.client_id not in excluded]
    logger.info(f"Retraining from scratch on {len(retained)} clients, excluding {sorted(excluded)}")
    state = init_server(retained, layout, rule=cfg.weight_rule, seed=cfg.seed)
    return run_rounds(state, cfg, cfg.rounds)
