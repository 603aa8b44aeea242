"""
Tests for propagation / Laplacian matrices, the eigensolver and the partitioner
"""
import numpy as np
import pytest
import scipy.sparse as sp

from src.collectors import make_synthetic_dataset
from src.exceptions import DegreeZeroError, PartitionError, ShapeError
from src.models import Dataset, IsolatedNodePolicy, SparseGraph
from src.processors import (
    balance_bounds,
    edge_cut,
    induce_shards,
    normalized_adjacency,
    normalized_laplacian,
    partition_graph,
    residual_norm,
    smallest_eigenpairs,
)


def random_graph(n, p, rng):
    rows, cols = np.triu_indices(n, k=1)
    keep = rng.random(rows.size) < p
    return SparseGraph.from_edges(n, np.stack([rows[keep], cols[keep]], axis=1))


# ---- propagation and Laplacian ---------------------------------------------

def test_normalized_adjacency_single_edge():
    a_hat = normalized_adjacency(SparseGraph.from_edges(2, [[0, 1]])).toarray()
    np.testing.assert_allclose(a_hat, np.full((2, 2), 0.5))


def test_normalized_adjacency_triangle_is_uniform():
    a_hat = normalized_adjacency(SparseGraph.from_edges(3, [[0, 1], [1, 2], [0, 2]])).toarray()
    np.testing.assert_allclose(a_hat, np.full((3, 3), 1.0 / 3.0), rtol=1e-15)


def test_normalized_adjacency_path_matches_dense_formula():
    a = np.array([[0.0, 1.0, 0.0], [1.0, 0.0, 1.0], [0.0, 1.0, 0.0]])
    a_tilde = a + np.eye(3)
    d = np.diag(1.0 / np.sqrt(a_tilde.sum(axis=1)))

    a_hat = normalized_adjacency(SparseGraph.from_edges(3, [[0, 1], [1, 2]])).toarray()

    np.testing.assert_allclose(a_hat, d @ a_tilde @ d, rtol=1e-14)
    assert a_hat[0, 1] == pytest.approx(1.0 / np.sqrt(6.0))
    assert a_hat[1, 1] == pytest.approx(1.0 / 3.0)


def test_normalized_adjacency_isolated_node_keeps_self_loop():
    a_hat = normalized_adjacency(SparseGraph.from_edges(3, [[0, 1]])).toarray()
    assert a_hat[2, 2] == 1.0
    assert a_hat[2, :2].tolist() == [0.0, 0.0]


def test_normalized_adjacency_symmetric(rng):
    g = random_graph(30, 0.2, rng)
    a_hat = normalized_adjacency(g)
    assert abs(a_hat - a_hat.T).max() < 1e-15


def test_laplacian_single_edge_spectrum_is_zero_and_two():
    lap = normalized_laplacian(SparseGraph.from_edges(2, [[0, 1]]))
    profile = smallest_eigenpairs(lap, 2)
    np.testing.assert_allclose(profile.eigenvalues, [0.0, 2.0], atol=1e-12)


def test_laplacian_path_spectrum(path_graph):
    # P4 normalized Laplacian eigenvalues are 1 - cos(pi k / 3)
    expected = 1.0 - np.cos(np.pi * np.arange(4) / 3)
    profile = smallest_eigenpairs(normalized_laplacian(path_graph), 4)
    np.testing.assert_allclose(profile.eigenvalues, expected, atol=1e-10)


def test_isolated_nodes_zero_policy_and_reject_policy():
    g = SparseGraph.from_edges(3, [[0, 1]])
    lap = normalized_laplacian(g, IsolatedNodePolicy.ZERO).toarray()
    np.testing.assert_array_equal(lap[2], [0.0, 0.0, 1.0])
    with pytest.raises(DegreeZeroError):
        normalized_laplacian(g, IsolatedNodePolicy.REJECT)


@pytest.mark.parametrize("trial", range(10))
def test_laplacian_spectrum_within_zero_two(trial):
    rng = np.random.default_rng(trial)
    g = random_graph(int(rng.integers(2, 50)), rng.uniform(0.05, 0.5), rng)
    values = np.linalg.eigvalsh(normalized_laplacian(g).toarray())
    assert values.min() >= -1e-8
    assert values.max() <= 2.0 + 1e-8


# ---- eigensolver -------------------------------------------------------------

@pytest.mark.parametrize("trial", range(25))
def test_eigensolver_matches_dense_decomposition(trial):
    rng = np.random.default_rng(100 + trial)
    n = int(rng.integers(1, 51))
    m = rng.standard_normal((n, n))
    m = m + m.T
    k = int(rng.integers(1, n + 1))

    profile = smallest_eigenpairs(m, k)

    np.testing.assert_allclose(profile.eigenvalues, np.linalg.eigvalsh(m)[:k], atol=1e-8)
    u = profile.eigenvectors
    np.testing.assert_allclose(u.T @ u, np.eye(k), atol=1e-10)
    assert residual_norm(m, profile.eigenvalues, u) < 1e-8


def test_projector_is_idempotent(tiny_dataset):
    profile = smallest_eigenpairs(normalized_laplacian(tiny_dataset.graph), 8)
    proj = profile.eigenvectors @ profile.eigenvectors.T
    np.testing.assert_allclose(proj @ proj, proj, atol=1e-12)


def test_sparse_lanczos_path_matches_dense(rng):
    n = 120
    ring = np.stack([np.arange(n), (np.arange(n) + 1) % n], axis=1)
    g = SparseGraph.from_edges(n, np.concatenate([ring, random_graph(n, 0.03, rng).edges]))
    lap = normalized_laplacian(g)
    sparse = smallest_eigenpairs(lap, 6, seed=1, dense_limit=50)
    dense = smallest_eigenpairs(lap, 6)

    np.testing.assert_allclose(sparse.eigenvalues, dense.eigenvalues, atol=1e-8)
    assert residual_norm(lap, sparse.eigenvalues, sparse.eigenvectors) <= 1e-8


def test_eigenvector_signs_are_canonical(path_graph):
    vectors = smallest_eigenpairs(normalized_laplacian(path_graph), 4).eigenvectors
    for col in vectors.T:
        assert col[np.argmax(np.abs(col))] > 0


@pytest.mark.parametrize("matrix,k", [
    (np.ones((3, 4)), 1),
    (np.eye(3), 0),
    (np.eye(3), 4),
    (np.array([[0.0, 1.0], [0.0, 0.0]]), 1),
])
def test_eigensolver_shape_errors(matrix, k):
    with pytest.raises(ShapeError):
        smallest_eigenpairs(matrix, k)


def test_eigensolver_accepts_sparse_input():
    m = sp.diags([3.0, 1.0, 2.0]).tocsr()
    profile = smallest_eigenpairs(m, 2)
    np.testing.assert_allclose(profile.eigenvalues, [1.0, 2.0])


# ---- partitioning ------------------------------------------------------------

def test_partition_is_balanced_and_deterministic():
    ds = make_synthetic_dataset(n=100, num_classes=4, num_features=3, seed=2)
    a = partition_graph(ds.graph, 5, seed=9)
    b = partition_graph(ds.graph, 5, seed=9)

    np.testing.assert_array_equal(a, b)
    lower, upper = balance_bounds(100, 5)
    sizes = np.bincount(a, minlength=5)
    assert sizes.min() >= lower and sizes.max() <= upper
    assert set(a.tolist()) == set(range(5))


def test_partition_cut_beats_random_split():
    ds = make_synthetic_dataset(n=120, num_classes=3, num_features=3, p_in=0.2, p_out=0.005, seed=6)
    assignment = partition_graph(ds.graph, 3, seed=0)
    shuffled = np.random.default_rng(0).permutation(assignment)
    assert edge_cut(ds.graph, assignment) < edge_cut(ds.graph, shuffled)


def test_partition_errors(path_graph):
    with pytest.raises(PartitionError):
        partition_graph(path_graph, 1)
    with pytest.raises(PartitionError):
        partition_graph(path_graph, 5)


def test_edge_cut_counts_cross_part_edges(path_graph):
    assert edge_cut(path_graph, np.array([0, 0, 1, 1])) == 1
    assert edge_cut(path_graph, np.array([0, 1, 0, 1])) == 3


def test_induced_shards_drop_cross_edges(tiny_dataset):
    assignment = partition_graph(tiny_dataset.graph, 3, seed=1)
    shards = induce_shards(tiny_dataset, assignment)

    assert [s.client_id for s in shards] == [0, 1, 2]
    assert sum(s.num_nodes for s in shards) == tiny_dataset.n
    inner_edges = sum(s.local.graph.num_edges for s in shards)
    assert inner_edges == tiny_dataset.graph.num_edges - edge_cut(tiny_dataset.graph, assignment)
    for shard in shards:
        np.testing.assert_array_equal(shard.local.x, tiny_dataset.x[shard.global_ids])
        np.testing.assert_array_equal(shard.local.y, tiny_dataset.y[shard.global_ids])


def test_induce_shards_rejects_wrong_length(tiny_dataset):
    with pytest.raises(ShapeError):
        induce_shards(tiny_dataset, np.zeros(3, dtype=np.int64))


def test_ten_node_path_splits_with_a_single_cut_edge():
    path = SparseGraph.from_edges(10, [[i, i + 1] for i in range(9)])
    assignment = partition_graph(path, 2, seed=0)

    assert edge_cut(path, assignment) == 1
    assert np.bincount(assignment).tolist() == [5, 5]


def test_disjoint_triangles_split_with_no_cut():
    triangles = SparseGraph.from_edges(6, [[0, 1], [1, 2], [0, 2], [3, 4], [4, 5], [3, 5]])
    for seed in range(5):
        assignment = partition_graph(triangles, 2, seed=seed)
        assert edge_cut(triangles, assignment) == 0
        assert len(set(assignment[:3].tolist())) == 1


def test_single_part_shard_is_the_whole_graph(tiny_dataset):
    (shard,) = induce_shards(tiny_dataset, np.zeros(tiny_dataset.n, dtype=np.int64))

    assert shard.client_id == 0
    np.testing.assert_array_equal(shard.global_ids, np.arange(tiny_dataset.n))
    np.testing.assert_array_equal(shard.local.graph.edges, tiny_dataset.graph.edges)
    np.testing.assert_array_equal(shard.local.x, tiny_dataset.x)
    np.testing.assert_array_equal(shard.local.train_mask, tiny_dataset.train_mask)
    np.testing.assert_array_equal(shard.local.test_mask, tiny_dataset.test_mask)


def test_two_node_graph_splits_one_and_one():
    ds = Dataset(graph=SparseGraph.from_edges(2, [[0, 1]]), x=np.array([[1.0], [2.0]]), y=np.array([0, 1]),
                 train_mask=np.array([True, True]), val_mask=np.zeros(2, dtype=bool),
                 test_mask=np.zeros(2, dtype=bool), num_classes=2)
    assignment = partition_graph(ds.graph, 2, seed=0)
    shards = induce_shards(ds, assignment)

    assert sorted(assignment.tolist()) == [0, 1]
    assert [s.num_nodes for s in shards] == [1, 1]
    assert all(s.local.graph.num_edges == 0 for s in shards)
