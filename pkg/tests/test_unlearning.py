"""
Tests for the forgetting objectives, gradient correction, clipping and the
unlearning loop
"""
from types import SimpleNamespace

import numpy as np
import pytest

from src.analyzers import MiaEvaluator, build_mia_sets, global_loss
from src.config import FedConfig, TrainConfig, UnlearnConfig
from src.exceptions import EmptyMaskError
from src.federation import run_federated
from src.models import MiaThreshold, Split, SparseGraph
from src.nn import GraphInputs, ParamLayout
from src.processors import normalized_adjacency
from src.unlearning import (
    clip_and_project,
    gradient_correct,
    mia_margin_loss,
    npo_loss,
    reference_log_probs,
    retain_direction,
    run_unlearning,
    start_unlearning,
    unlearn_direction,
    unlearn_round,
)

FD_EPS = 1e-6


def numeric_gradient(f, theta):
    grad = np.zeros_like(theta)
    for i in range(theta.size):
        step = np.zeros_like(theta)
        step[i] = FD_EPS
        grad[i] = (f(theta + step) - f(theta - step)) / (2 * FD_EPS)
    return grad


def relative_error(analytic, numeric):
    return float(np.max(np.abs(analytic - numeric) / np.maximum(np.abs(analytic) + np.abs(numeric), 1e-5)))


# ---- gradient correction -----------------------------------------------------

def test_correction_never_leaves_an_obtuse_direction():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        dim = int(rng.integers(4, 10_001))
        du = rng.standard_normal(dim)
        dr = rng.standard_normal(dim) * rng.uniform(0.01, 100)
        if rng.random() < 0.3:
            du = du - 2.0 * dr  # force an obtuse pair

        result = gradient_correct(du, dr)

        bound = -1e-9 * np.linalg.norm(result.direction) * np.linalg.norm(dr)
        assert np.dot(result.direction, dr) >= bound
        if np.dot(du, dr) >= 0:
            assert result.direction is du
            assert not result.corrected
        else:
            again = gradient_correct(result.direction, dr)
            np.testing.assert_allclose(again.direction, result.direction, atol=1e-12 * max(1.0, np.linalg.norm(du)))


def test_orthogonal_directions_pass_through():
    du = np.array([1.0, 0.0, 0.0, 0.0])
    result = gradient_correct(du, np.array([0.0, 3.0, 0.0, 0.0]))
    assert result.direction is du
    assert result.dot == 0.0


def test_antiparallel_direction_is_annihilated():
    dr = np.array([0.5, -1.0, 2.0, 4.0])
    result = gradient_correct(-dr, dr)
    assert result.corrected
    np.testing.assert_allclose(result.direction, np.zeros(4), atol=1e-12)


def test_hand_computed_projection():
    result = gradient_correct(np.array([1.0, -1.0]), np.array([0.0, 2.0]))
    assert result.dot == -2.0
    np.testing.assert_allclose(result.direction, [1.0, 0.0], atol=1e-12)


def test_vanishing_retain_direction_is_flagged():
    du = np.array([1.0, 2.0])
    result = gradient_correct(du, np.zeros(2))
    assert result.degenerate_retain
    assert not result.corrected
    assert result.direction is du


# ---- clipping and drift projection --------------------------------------------

def test_clip_rescales_long_steps():
    theta = clip_and_project(np.array([6.0, 8.0]), np.zeros(2), np.zeros(2), c_max=5.0, tau=100.0)
    np.testing.assert_allclose(theta, [3.0, 4.0])


def test_interior_step_is_applied_unchanged():
    theta0 = np.array([1.0, 1.0])
    step = np.array([0.3, -0.4])
    np.testing.assert_array_equal(clip_and_project(step, theta0, theta0, c_max=1.0, tau=1.0), theta0 + step)


def test_ball_projection_arithmetic():
    theta = clip_and_project(np.array([5.0, 0.0]), np.array([9.0, 0.0]), np.zeros(2), c_max=10.0, tau=10.0)
    np.testing.assert_allclose(theta, [10.0, 0.0])


def test_drift_and_step_bounds_hold_over_a_random_walk():
    rng = np.random.default_rng(1)
    theta0 = rng.standard_normal(30)
    theta = theta0.copy()
    c_max, tau = 0.7, 2.5
    for _ in range(500):
        step = rng.standard_normal(30) * rng.uniform(0, 3)
        new = clip_and_project(step, theta, theta0, c_max, tau)
        assert np.linalg.norm(new - theta0) <= tau + 1e-9
        assert np.linalg.norm(new - theta) <= c_max + 1e-9
        theta = new


# ---- objectives ----------------------------------------------------------------

def objective_instance(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, 9))
    d, h, c = int(rng.integers(1, 5)), int(rng.integers(2, 6)), int(rng.integers(2, 5))
    rows, cols = np.triu_indices(n, k=1)
    keep = rng.random(rows.size) < 0.5
    graph = SparseGraph.from_edges(n, np.stack([rows[keep], cols[keep]], axis=1))
    inputs = GraphInputs.from_arrays(normalized_adjacency(graph), rng.standard_normal((n, d)),
                                     y=rng.integers(c, size=n))
    layout = ParamLayout(d=d, h=h, c=c)
    nodes = np.sort(rng.choice(n, size=int(rng.integers(1, n + 1)), replace=False))
    return inputs, layout, nodes, rng


@pytest.mark.parametrize("seed", range(8))
def test_npo_gradient_matches_finite_differences(seed):
    inputs, layout, nodes, rng = objective_instance(seed)
    theta = rng.standard_normal(layout.size)
    ref = reference_log_probs(rng.standard_normal(layout.size), layout, inputs, nodes)
    beta = float(rng.uniform(0.5, 6.0))
    dropout, dropout_seed = (0.3, seed) if seed % 2 else (0.0, None)

    _, analytic = npo_loss(theta, layout, inputs, nodes, ref, beta, dropout, dropout_seed)
    numeric = numeric_gradient(
        lambda v: npo_loss(v, layout, inputs, nodes, ref, beta, dropout, dropout_seed)[0], theta)

    assert relative_error(analytic, numeric) <= 1e-4


@pytest.mark.parametrize("seed", range(8))
def test_margin_gradient_matches_finite_differences(seed):
    inputs, layout, nodes, rng = objective_instance(100 + seed)
    theta = rng.standard_normal(layout.size) * 0.5
    # every node inside the hinge keeps the objective smooth
    tau_pre = 25.0

    _, analytic = mia_margin_loss(theta, layout, inputs, nodes, tau_pre, 0.5, 3.0)
    numeric = numeric_gradient(lambda v: mia_margin_loss(v, layout, inputs, nodes, tau_pre, 0.5, 3.0)[0], theta)

    assert relative_error(analytic, numeric) <= 1e-4


def test_npo_at_reference_is_two_ln2_over_beta():
    inputs, layout, nodes, rng = objective_instance(3)
    theta = rng.standard_normal(layout.size)
    ref = reference_log_probs(theta, layout, inputs, nodes)
    loss, _ = npo_loss(theta, layout, inputs, nodes, ref, beta=4.0)
    assert loss == pytest.approx(2.0 * np.log(2.0) / 4.0)


def test_margin_is_zero_when_losses_exceed_the_threshold():
    inputs, layout, nodes, rng = objective_instance(4)
    theta = rng.standard_normal(layout.size)
    loss, grad = mia_margin_loss(theta, layout, inputs, nodes, tau_pre=-10.0, margin=0.5, weight=3.0)
    assert loss == 0.0
    assert not grad.any()


def test_objectives_reject_empty_node_sets():
    inputs, layout, _, rng = objective_instance(5)
    theta = rng.standard_normal(layout.size)
    with pytest.raises(EmptyMaskError):
        mia_margin_loss(theta, layout, inputs, [], 1.0, 0.5, 1.0)


def direction_instance(seed, tau_pre):
    inputs, layout, nodes, rng = objective_instance(200 + seed)
    train_mask = np.zeros(inputs.n, dtype=bool)
    train_mask[nodes] = True
    inputs = GraphInputs.from_arrays(inputs.a_hat, inputs.x, inputs.y, train_mask=train_mask)
    target = SimpleNamespace(client_id=0, inputs=inputs)
    threshold = MiaThreshold(tau_pre=tau_pre, member_summary={}, nonmember_summary={},
                             balanced_accuracy=1.0, separability=1.0)
    state = start_unlearning(rng.standard_normal(layout.size), target, layout, threshold)
    state.theta = state.theta0 + 0.3 * rng.standard_normal(layout.size)
    return state, target, layout, nodes


@pytest.mark.parametrize("seed", range(4))
def test_direction_without_margin_is_the_negative_npo_gradient(seed):
    state, target, layout, nodes = direction_instance(seed, tau_pre=25.0)
    cfg = UnlearnConfig(margin_weight=0.0, dropout=0.0, npo_beta=3.0)

    direction, parts = unlearn_direction(state, target, layout, cfg)
    npo, grad = npo_loss(state.theta, layout, target.inputs, nodes, state.ref_logp, 3.0)

    np.testing.assert_allclose(direction, -grad, rtol=1e-12, atol=1e-15)
    assert parts == {"npo": npo, "margin": 0.0}


@pytest.mark.parametrize("seed", range(4))
def test_direction_descends_the_combined_objective(seed):
    state, target, layout, nodes = direction_instance(seed, tau_pre=25.0)
    cfg = UnlearnConfig(dropout=0.0)

    def objective(v):
        npo, _ = npo_loss(v, layout, target.inputs, nodes, state.ref_logp, cfg.npo_beta)
        margin, _ = mia_margin_loss(v, layout, target.inputs, nodes, 25.0, cfg.margin, cfg.margin_weight)
        return npo + margin

    direction, _ = unlearn_direction(state, target, layout, cfg)

    assert relative_error(-direction, numeric_gradient(objective, state.theta)) <= 1e-4


# ---- the unlearning loop ---------------------------------------------------------

@pytest.fixture
def trained(tiny_dataset):
    cfg = FedConfig(rounds=8, clients=3, hidden=8, seed=2,
                    train=TrainConfig(epochs=3, batch=32, lr=0.2, dropout=0.0, seed=2))
    state, _ = run_federated(tiny_dataset, cfg)
    target = state.clients[0]
    sets = build_mia_sets(target.shard, state.shards[1:])
    evaluator = MiaEvaluator(sets, {c.client_id: c.inputs for c in state.clients}, state.layout)
    return state, evaluator, evaluator.fit(state.global_params)


def test_zero_epochs_returns_the_trained_global(trained):
    state, evaluator, threshold = trained
    result = run_unlearning(state, 0, UnlearnConfig(epochs=0, seed=0), TrainConfig(), threshold)
    np.testing.assert_array_equal(result.theta, state.global_params)
    assert result.log == []


def test_zero_scale_leaves_parameters_unchanged(trained):
    state, _, threshold = trained
    target = state.clients[0]
    start = start_unlearning(state.global_params, target, state.layout, threshold)
    cfg = UnlearnConfig(scale=0.0, seed=0)

    after, entry = unlearn_round(start, target, state.clients[1:], state.weights[1:], cfg,
                                 TrainConfig(epochs=1, dropout=0.0), state.layout)

    np.testing.assert_array_equal(after.theta, start.theta)
    assert entry.drift == 0.0
    assert after.epoch == 1


def test_target_loss_rises_while_drift_stays_bounded(trained):
    state, evaluator, threshold = trained
    cfg = UnlearnConfig(epochs=5, lr=1e-3, scale=1.0, dropout=0.0, drift_radius=3.0, seed=4)
    train_cfg = TrainConfig(epochs=1, batch=32, lr=0.05, dropout=0.0)

    result = run_unlearning(state, 0, cfg, train_cfg, threshold, evaluator=evaluator)

    losses = [global_loss(state.global_params, state.layout, [state.clients[0].inputs], Split.TRAIN)]
    losses += [entry.target_ce for entry in result.log]
    assert all(b >= a - 1e-6 for a, b in zip(losses, losses[1:]))
    assert losses[-1] > losses[0]
    assert all(entry.drift <= cfg.drift_radius + 1e-9 for entry in result.log)
    assert all(0.0 <= entry.mia_rate <= 1.0 for entry in result.log)
    assert all(entry.retain_acc is not None for entry in result.log)


def test_small_drift_radius_is_enforced_every_epoch(trained):
    state, _, threshold = trained
    cfg = UnlearnConfig(epochs=6, drift_radius=0.05, seed=1)
    result = run_unlearning(state, 0, cfg, TrainConfig(epochs=1, batch=32), threshold)

    for entry in result.log:
        assert entry.drift <= 0.05 + 1e-9
    assert np.linalg.norm(result.theta - state.global_params) <= 0.05 + 1e-9


def test_disabled_correction_uses_the_raw_direction(trained):
    state, _, threshold = trained
    cfg = UnlearnConfig(epochs=2, seed=3)
    result = run_unlearning(state, 0, cfg, TrainConfig(epochs=1, batch=32), threshold, gradient_correction=False)
    assert all(entry.dot_ur is None and not entry.corrected for entry in result.log)


def test_unlearning_is_deterministic(trained):
    state, _, threshold = trained
    cfg = UnlearnConfig(epochs=3, seed=5)
    train_cfg = TrainConfig(epochs=1, batch=32)
    a = run_unlearning(state, 0, cfg, train_cfg, threshold)
    b = run_unlearning(state, 0, cfg, train_cfg, threshold)
    assert a.theta.tobytes() == b.theta.tobytes()
    assert a.records == b.records


def test_retain_direction_single_client_is_its_displacement(trained):
    state, _, _ = trained
    client = state.clients[1]
    train_cfg = TrainConfig(epochs=1, batch=32)
    theta = state.global_params

    delta = retain_direction(theta, [client], np.array([0.3]), train_cfg, state.layout,
                             epochs=1, round_index=0, seed=9)
    update = client.train(theta, train_cfg, state.layout, 0, 9, epochs=1)

    np.testing.assert_array_equal(delta, update.params - theta)
