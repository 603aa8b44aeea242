"""
Graph processing: propagation / Laplacian matrices, eigensolver, partitioning
"""
from .graph import normalized_adjacency, normalized_laplacian
from .partition import balance_bounds, edge_cut, induce_shards, partition_graph
from .spectral import residual_norm, smallest_eigenpairs

__all__ = [
    "normalized_adjacency",
    "normalized_laplacian",
    "smallest_eigenpairs",
    "residual_norm",
    "partition_graph",
    "induce_shards",
    "edge_cut",
    "balance_bounds",
]
