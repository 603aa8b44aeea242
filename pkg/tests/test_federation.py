"""
Tests for FedAvg aggregation, rounds and the retrain oracle
"""
from dataclasses import replace

import numpy as np
import pytest

from src.config import FedConfig, TrainConfig
from src.exceptions import ValidationError
from src.experiments import retrain_oracle
from src.federation import (
    FederatedClient,
    compute_weights,
    fed_round,
    init_server,
    run_federated,
    run_rounds,
    weighted_average,
)
from src.models import WeightRule
from src.nn import ParamLayout
from src.processors import induce_shards, partition_graph


@pytest.fixture
def fed_cfg():
    return FedConfig(rounds=2, clients=3, hidden=6, seed=5,
                     train=TrainConfig(epochs=1, batch=16, lr=0.05, seed=5))


@pytest.fixture
def clients(tiny_dataset):
    assignment = partition_graph(tiny_dataset.graph, 3, seed=0)
    return [FederatedClient.from_shard(s) for s in induce_shards(tiny_dataset, assignment)]


@pytest.fixture
def layout(tiny_dataset):
    return ParamLayout(d=tiny_dataset.num_features, h=6, c=tiny_dataset.num_classes)


def test_weighted_average_equals_componentwise_mean(rng):
    vectors = [rng.standard_normal(50) for _ in range(4)]
    weights = np.array([0.1, 0.2, 0.3, 0.4])

    result = weighted_average(vectors, weights, [3, 1, 0, 2])

    expected = sum(w * v for w, v in zip(weights, vectors))
    np.testing.assert_allclose(result, expected, rtol=0, atol=1e-15)


def test_weighted_average_is_order_invariant(rng):
    vectors = [rng.standard_normal(200) for _ in range(5)]
    weights = rng.dirichlet(np.ones(5))
    ids = [4, 0, 3, 1, 2]
    perm = [2, 4, 0, 1, 3]

    a = weighted_average(vectors, weights, ids)
    b = weighted_average([vectors[i] for i in perm], weights[perm], [ids[i] for i in perm])

    assert a.tobytes() == b.tobytes()


def test_identical_clients_aggregate_to_the_same_vector(rng):
    v = rng.standard_normal(10)
    np.testing.assert_allclose(weighted_average([v, v, v], np.full(3, 1 / 3), [0, 1, 2]), v, atol=1e-15)


def test_weights_by_node_count_and_uniform(clients):
    sizes = np.array([c.num_nodes for c in clients], dtype=float)
    np.testing.assert_allclose(compute_weights(clients), sizes / sizes.sum())
    np.testing.assert_allclose(compute_weights(clients, WeightRule.UNIFORM), np.full(3, 1 / 3))
    with pytest.raises(ValidationError):
        compute_weights([])


def test_round_is_deterministic_and_order_invariant(clients, layout, fed_cfg):
    a = fed_round(init_server(clients, layout, seed=5), fed_cfg)
    b = fed_round(init_server(list(reversed(clients)), layout, seed=5), fed_cfg)

    assert a.global_params.tobytes() == b.global_params.tobytes()
    assert a.round == 1
    assert a.history[0]["round"] == 1
    assert set(a.history[0]) >= {"train_acc", "val_acc", "test_acc", "train_loss", "global_norm"}


def test_threaded_round_matches_serial(clients, layout, fed_cfg):
    serial = fed_round(init_server(clients, layout, seed=5), fed_cfg)
    threaded = fed_round(init_server(clients, layout, seed=5), fed_cfg.model_copy(update={"workers": 3}))
    assert serial.global_params.tobytes() == threaded.global_params.tobytes()


def test_round_with_zero_local_epochs_keeps_global(clients, layout, fed_cfg):
    cfg = fed_cfg.model_copy(update={"train": TrainConfig(epochs=0)})
    state = init_server(clients, layout, seed=5)
    after = fed_round(state, cfg)
    np.testing.assert_allclose(after.global_params, state.global_params, atol=1e-15)


def test_partial_participation_is_seeded(clients, layout, fed_cfg):
    cfg = fed_cfg.model_copy(update={"participation": 0.5})
    a = run_rounds(init_server(clients, layout, seed=5), cfg, 2)
    b = run_rounds(init_server(clients, layout, seed=5), cfg, 2)
    assert a.global_params.tobytes() == b.global_params.tobytes()
    assert a.round == 2


def test_run_federated_improves_accuracy(tiny_dataset):
    cfg = FedConfig(rounds=15, clients=3, hidden=16, seed=1,
                    train=TrainConfig(epochs=5, batch=32, lr=0.2, dropout=0.0, seed=1))
    state, theta = run_federated(tiny_dataset, cfg)

    assert len(state.history) == 15
    assert state.history[-1]["train_loss"] < state.history[0]["train_loss"]
    assert state.history[-1]["test_acc"] >= 0.6
    assert theta is state.global_params


def test_client_without_train_nodes_returns_broadcast(clients, layout, fed_cfg, caplog):
    shard = clients[0].shard
    local = replace(shard.local, train_mask=np.zeros(shard.num_nodes, dtype=bool))
    empty = FederatedClient.from_shard(replace(shard, local=local))
    start = np.ones(layout.size)

    update = empty.train(start, fed_cfg.train, layout, round_index=0, seed=5)

    assert update.no_train_data
    np.testing.assert_array_equal(update.params, start)
    assert "no train nodes" in caplog.text


def test_retrain_oracle_ignores_excluded_shard(clients, layout, fed_cfg):
    baseline = retrain_oracle(clients, layout, fed_cfg, exclude=[0])

    shard = clients[0].shard
    perturbed_local = replace(shard.local, x=shard.local.x + 100.0)
    perturbed = [FederatedClient.from_shard(replace(shard, local=perturbed_local))] + clients[1:]
    again = retrain_oracle(perturbed, layout, fed_cfg, exclude=[0])

    assert baseline.global_params.tobytes() == again.global_params.tobytes()
    assert 0 not in baseline.client_ids


def test_retrain_oracle_with_one_client_left_is_central_training(clients, layout, fed_cfg):
    two = clients[:2]
    oracle = retrain_oracle(two, layout, fed_cfg, exclude=[two[0].client_id])

    solo = init_server([two[1]], layout, seed=fed_cfg.seed)
    solo = run_rounds(solo, fed_cfg, fed_cfg.rounds)

    assert oracle.global_params.tobytes() == solo.global_params.tobytes()
