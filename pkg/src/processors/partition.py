"""
Balanced graph partitioning and client shard induction

The partitioner grows K parts greedily from low-degree seeds (each step adds
the frontier node with the most neighbours already in the part), then runs
one boundary refinement pass that moves nodes with positive cut gain while
sizes stay inside the balance band.
"""
import logging
import math
from typing import Optional

import numpy as np

from ..exceptions import PartitionError, ShapeError
from ..models import ClientShard, Dataset, SparseGraph

logger = logging.getLogger(__name__)

BALANCE_SLACK = 0.2


def balance_bounds(n: int, num_parts: int) -> tuple[int, int]:
    """Integer part-size band around n/K"""
    target = n / num_parts
    lower = max(1, math.floor((1.0 - BALANCE_SLACK) * target))
    upper = math.ceil((1.0 + BALANCE_SLACK) * target)
    return lower, upper


def edge_cut(g: SparseGraph, assignment: np.ndarray) -> int:
    """Number of edges whose endpoints lie in different parts"""
    if g.num_edges == 0:
        return 0
    return int(np.count_nonzero(assignment[g.edges[:, 0]] != assignment[g.edges[:, 1]]))


def _grow_parts(g: SparseGraph, num_parts: int, rank: np.ndarray) -> np.ndarray:
    n = g.n
    indptr, indices = g.adjacency.indptr, g.adjacency.indices
    degrees = g.degrees
    sizes = [n // num_parts + (1 if p < n % num_parts else 0) for p in range(num_parts)]

    assignment = np.full(n, -1, dtype=np.int64)
    # seeds prefer low degree, ties broken by the seeded rank
    seed_order = sorted(range(n), key=lambda v: (degrees[v], rank[v]))
    seed_pos = 0

    for part in range(num_parts - 1):
        frontier: dict[int, int] = {}
        filled = 0
        while filled < sizes[part]:
            if frontier:
                node = max(frontier, key=lambda v: (frontier[v], -rank[v]))
                del frontier[node]
            else:
                while assignment[seed_order[seed_pos]] != -1:
                    seed_pos += 1
                node = seed_order[seed_pos]
            assignment[node] = part
            filled += 1
            for nb in indices[indptr[node]:indptr[node + 1]]:
                if assignment[nb] == -1:
                    frontier[nb] = frontier.get(nb, 0) + 1

    assignment[assignment == -1] = num_parts - 1
    return assignment


def _refine(g: SparseGraph, assignment: np.ndarray, num_parts: int, rank: np.ndarray) -> int:
    """One Kernighan–Lin style pass of single-node moves; returns the move count"""
    indptr, indices = g.adjacency.indptr, g.adjacency.indices
    lower, upper = balance_bounds(g.n, num_parts)
    sizes = np.bincount(assignment, minlength=num_parts)
    moves = 0

    for node in np.argsort(rank, kind="stable"):
        home = assignment[node]
        neighbours = indices[indptr[node]:indptr[node + 1]]
        if neighbours.size == 0:
            continue
        counts = np.bincount(assignment[neighbours], minlength=num_parts)
        internal = counts[home]
        counts[home] = -1
        best = int(np.argmax(counts))
        gain = counts[best] - internal
        if gain > 0 and sizes[home] - 1 >= lower and sizes[best] + 1 <= upper:
            assignment[node] = best
            sizes[home] -= 1
            sizes[best] += 1
            moves += 1
    return moves


def partition_graph(g: SparseGraph, num_parts: int, seed: int = 0) -> np.ndarray:
    """
    Split nodes into num_parts balanced parts with a small edge cut.

    Args:
        g: graph to split
        num_parts: K >= 2
        seed: tie-breaking seed; the result depends only on (g, K, seed)

    Returns:
        int64 assignment vector of length n with entries in [0, K)

    Raises:
        PartitionError: K < 2, n < K, or the balance band is violated
    """
    if num_parts < 2:
        raise PartitionError(f"need at least 2 parts, got {num_parts}")
    if g.n < num_parts:
        raise PartitionError(f"cannot split {g.n} nodes into {num_parts} non-empty parts")

    rank = np.random.default_rng(seed).permutation(g.n)
    assignment = _grow_parts(g, num_parts, rank)
    grown_cut = edge_cut(g, assignment)
    moves = _refine(g, assignment, num_parts, rank)

    sizes = np.bincount(assignment, minlength=num_parts)
    lower, upper = balance_bounds(g.n, num_parts)
    if sizes.min() < lower or sizes.max() > upper:
        raise PartitionError(f"part sizes {sizes.tolist()} outside balance band [{lower}, {upper}]")

    logger.info(
        f"Partitioned {g.n} nodes into {num_parts} parts: sizes {sizes.min()}-{sizes.max()}, "
        f"edge cut {grown_cut} -> {edge_cut(g, assignment)} after {moves} refinement moves"
    )
    return assignment


def induce_shards(ds: Dataset, assignment: np.ndarray, part_ids: Optional[list] = None) -> list[ClientShard]:
    """
    Restrict the dataset to each part; cross-part edges are dropped.

    Args:
        ds: full dataset
        assignment: part id per node
        part_ids: parts to materialize (default: all ids present, ascending)

    Returns:
        One ClientShard per part, client_id = part id
    """
    assignment = np.asarray(assignment, dtype=np.int64)
    if assignment.shape != (ds.n,):
        raise ShapeError(f"assignment length {assignment.size} != n={ds.n}")

    if part_ids is None:
        part_ids = np.unique(assignment).tolist()

    adjacency = ds.graph.adjacency
    shards = []
    for part in part_ids:
        ids = np.flatnonzero(assignment == part)
        if ids.size == 0:
            logger.warning(f"Part {part} is empty; no shard created")
            continue
        sub = adjacency[ids][:, ids].tocoo()
        upper = sub.row < sub.col
        local_edges = np.stack([sub.row[upper], sub.col[upper]], axis=1)
        local = Dataset(
            graph=SparseGraph.from_edges(len(ids), local_edges),
            x=ds.x[ids],
            y=ds.y[ids],
            train_mask=ds.train_mask[ids],
            val_mask=ds.val_mask[ids],
            test_mask=ds.test_mask[ids],
            num_classes=ds.num_classes,
        )
        shards.append(ClientShard(client_id=int(part), global_ids=ids, local=local))

    logger.debug(f"Induced {len(shards)} shards, sizes {[s.num_nodes for s in shards]}")
    return shards
