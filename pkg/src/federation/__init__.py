"""
Federated averaging over client shards
"""
from .fedavg import (
    FederatedClient,
    ServerState,
    compute_weights,
    fed_round,
    init_server,
    run_federated,
    run_rounds,
    weighted_average,
)

__all__ = [
    "FederatedClient",
    "ServerState",
    "compute_weights",
    "weighted_average",
    "init_server",
    "fed_round",
    "run_rounds",
    "run_federated",
]
