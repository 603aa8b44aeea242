"""
Propagation and Laplacian matrices

    Â      = D̃^{-1/2} (A + I) D̃^{-1/2}        (GCN message passing)
    L_norm = I - D^{-1/2} A D^{-1/2}            (spectral profile)
"""
import logging

import numpy as np
import scipy.sparse as sp

from ..exceptions import DegreeZeroError
from ..models import IsolatedNodePolicy, SparseGraph

logger = logging.getLogger(__name__)


def normalized_adjacency(g: SparseGraph) -> sp.csr_matrix:
    """
    Symmetrically normalized adjacency with self-loops.

    Isolated nodes get Â[i][i] = 1; the self-loop keeps every degree >= 1.
    """
    a_tilde = g.adjacency + sp.identity(g.n, format="csr", dtype=np.float64)
    degree = np.asarray(a_tilde.sum(axis=1)).ravel()
    d_inv_sqrt = sp.diags(1.0 / np.sqrt(degree))
    a_hat = (d_inv_sqrt @ a_tilde @ d_inv_sqrt).tocsr()
    a_hat.sort_indices()
    return a_hat


def normalized_laplacian(
    g: SparseGraph,
    isolated: IsolatedNodePolicy = IsolatedNodePolicy.ZERO,
) -> sp.csr_matrix:
    """
    Normalized Laplacian I - D^{-1/2} A D^{-1/2}.

    Args:
        g: graph
        isolated: ZERO sets the D^{-1/2} entry of degree-0 nodes to 0 (their
            row becomes e_i); REJECT raises DegreeZeroError

    Returns:
        Sparse symmetric PSD matrix with spectrum in [0, 2]
    """
    degree = g.degrees.astype(np.float64)
    zero = degree == 0
    if zero.any():
        if IsolatedNodePolicy(isolated) is IsolatedNodePolicy.REJECT:
            raise DegreeZeroError(f"{int(zero.sum())} isolated nodes (first: {int(np.argmax(zero))})")
        logger.debug(f"{int(zero.sum())} isolated nodes mapped to unit Laplacian rows")

    d_inv_sqrt = np.zeros_like(degree)
    d_inv_sqrt[~zero] = 1.0 / np.sqrt(degree[~zero])
    d = sp.diags(d_inv_sqrt)
    lap = (sp.identity(g.n, format="csr", dtype=np.float64) - d @ g.adjacency @ d).tocsr()
    lap.sort_indices()
    return lap
