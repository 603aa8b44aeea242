"""
FedAvg server state machine

Each round the server broadcasts the global parameters, every participating
client trains locally from them, and the server replaces the global with the
weighted mean of the returned parameters. Clients are stateless between
rounds.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from ..analyzers.metrics import split_metrics
from ..config import FedConfig, TrainConfig
from ..exceptions import ValidationError
from ..models import ClientShard, Dataset, WeightRule
from ..nn import GraphInputs, LocalUpdate, ParamLayout, init_params, local_train
from ..processors import induce_shards, partition_graph

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class FederatedClient:
    """A shard plus its precomputed propagation tensors"""
    shard: ClientShard
    inputs: GraphInputs

    @classmethod
    def from_shard(cls, shard: ClientShard) -> "FederatedClient":
        return cls(shard=shard, inputs=GraphInputs.from_dataset(shard.local))

    @property
    def client_id(self) -> int:
        return self.shard.client_id

    @property
    def num_nodes(self) -> int:
        return self.shard.num_nodes

    def train(
        self,
        start: np.ndarray,
        cfg: TrainConfig,
        layout: ParamLayout,
        round_index: int,
        seed: int,
        epochs: Optional[int] = None,
    ) -> LocalUpdate:
        """Local training seeded by (seed, client_id, round)"""
        update = local_train(self.inputs, start, cfg, layout,
                             seed=[seed, self.client_id, round_index], epochs=epochs)
        if update.no_train_data:
            logger.warning(f"Client {self.client_id} has no train nodes; returning broadcast parameters")
        return update


def compute_weights(clients: Sequence, rule: WeightRule = WeightRule.BY_NODE_COUNT) -> np.ndarray:
    """
    Aggregation weights on the simplex.

    Args:
        clients: ClientShard or FederatedClient objects
        rule: by_node_count gives n_i / sum(n); uniform gives 1/K
    """
    if not clients:
        raise ValidationError("cannot weight an empty client list")
    if WeightRule(rule) is WeightRule.UNIFORM:
        return np.full(len(clients), 1.0 / len(clients))
    sizes = np.array([c.num_nodes for c in clients], dtype=np.float64)
    if sizes.sum() <= 0:
        raise ValidationError("clients hold no nodes")
    return sizes / sizes.sum()


def weighted_average(vectors: Sequence[np.ndarray], weights: np.ndarray, client_ids: Sequence[int]) -> np.ndarray:
    """Sum of p_i·w_i accumulated in ascending client id order"""
    order = sorted(range(len(client_ids)), key=lambda i: client_ids[i])
    total = np.zeros_like(vectors[order[0]])
    for i in order:
        total += weights[i] * vectors[i]
    return total


@dataclass(eq=False)
class ServerState:
    global_params: np.ndarray
    layout: ParamLayout
    clients: list
    weights: np.ndarray
    round: int = 0
    seed: int = 0
    history: list = field(default_factory=list)

    @property
    def shards(self) -> list:
        return [c.shard for c in self.clients]

    @property
    def client_ids(self) -> list:
        return [c.client_id for c in self.clients]

    def client(self, client_id: int) -> FederatedClient:
        for c in self.clients:
            if c.client_id == client_id:
                return c
        raise KeyError(f"no client {client_id}")


def init_server(
    clients: Sequence[FederatedClient],
    layout: ParamLayout,
    start: Optional[np.ndarray] = None,
    rule: WeightRule = WeightRule.BY_NODE_COUNT,
    seed: int = 0,
) -> ServerState:
    """Server state with fresh Glorot parameters unless `start` is given"""
    clients = sorted(clients, key=lambda c: c.client_id)
    theta = init_params(layout, seed) if start is None else np.array(start, dtype=np.float64)
    layout.check(theta)
    return ServerState(global_params=theta, layout=layout, clients=clients,
                       weights=compute_weights(clients, rule), seed=seed)


def _participants(state: ServerState, participation: float) -> list[int]:
    k = len(state.clients)
    if participation >= 1.0:
        return list(range(k))
    count = max(1, int(round(participation * k)))
    rng = np.random.default_rng([state.seed, state.round])
    return sorted(rng.choice(k, size=count, replace=False).tolist())


def fed_round(state: ServerState, cfg: FedConfig, record: bool = True) -> ServerState:
    """
    One broadcast / local-train / aggregate round.

    Args:
        state: current server state (not modified)
        cfg: federation settings; participation and local training
        record: evaluate and append a history record

    Returns:
        New ServerState with round advanced by one
    """
    chosen = _participants(state, cfg.participation)
    clients = [state.clients[i] for i in chosen]
    weights = state.weights[chosen] / state.weights[chosen].sum()
    start = state.global_params

    def run(client: FederatedClient) -> LocalUpdate:
        return client.train(start, cfg.train, state.layout, state.round, state.seed)

    if cfg.workers > 1 and len(clients) > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            updates = list(pool.map(run, clients))
    else:
        updates = [run(c) for c in clients]

    new_global = weighted_average([u.params for u in updates], weights, [c.client_id for c in clients])
    new_state = replace(state, global_params=new_global, round=state.round + 1, history=list(state.history))

    if record:
        entry = {"round": new_state.round, **split_metrics(new_global, state.layout, [c.inputs for c in state.clients]),
                 "global_norm": float(np.linalg.norm(new_global))}
        new_state.history.append(entry)
        logger.debug(
            f"Round {entry['round']}: train_acc={entry['train_acc']}, test_acc={entry['test_acc']}, "
            f"train_loss={entry['train_loss']}"
        )
    return new_state


def run_rounds(state: ServerState, cfg: FedConfig, rounds: int) -> ServerState:
    for _ in range(rounds):
        state = fed_round(state, cfg)
    return state


def run_federated(
    ds: Dataset,
    cfg: FedConfig,
    shards: Optional[Sequence[ClientShard]] = None,
    partition_seed: Optional[int] = None,
) -> tuple[ServerState, np.ndarray]:
    """
    Partition (unless shards are given) and run cfg.rounds FedAvg rounds.

    Returns:
        (final ServerState, trained global parameter vector)
    """
    if shards is None:
        seed = cfg.seed if partition_seed is None else partition_seed
        shards = induce_shards(ds, partition_graph(ds.graph, cfg.clients, seed=seed))

    layout = ParamLayout(d=ds.num_features, h=cfg.hidden, c=ds.num_classes)
    clients = [FederatedClient.from_shard(s) for s in shards]
    state = init_server(clients, layout, rule=cfg.weight_rule, seed=cfg.seed)

    logger.info(f"FedAvg: {len(clients)} clients, {cfg.rounds} rounds, participation {cfg.participation}")
    state = run_rounds(state, cfg, cfg.rounds)
    if state.history:
        last = state.history[-1]
        logger.info(f"FedAvg done: test_acc={last['test_acc']}, train_loss={last['train_loss']}")
    return state, state.global_params
