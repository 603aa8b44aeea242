"""
Symmetric eigensolver for the k smallest eigenpairs

Small matrices go through LAPACK (numpy.linalg.eigh); larger sparse ones
through ARPACK's implicitly restarted Lanczos (scipy.sparse.linalg.eigsh).
Either way the result is checked against the residual bound before it is
returned.
"""
import logging

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import ArpackError, ArpackNoConvergence, eigsh

from ..exceptions import ConvergenceError, ShapeError
from ..models import SpectralProfile

logger = logging.getLogger(__name__)

DENSE_LIMIT = 512
SYMMETRY_TOL = 1e-10
LANCZOS_TOL = 1e-10
RESIDUAL_TOL = 1e-8


def _canonical_signs(vectors: np.ndarray) -> np.ndarray:
    """Flip each column so its largest-magnitude entry is positive"""
    if vectors.size == 0:
        return vectors
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def _asymmetry(m) -> float:
    diff = m - m.T
    if sp.issparse(diff):
        return float(abs(diff).max()) if diff.nnz else 0.0
    return float(np.max(np.abs(diff))) if diff.size else 0.0


def residual_norm(m, eigenvalues: np.ndarray, eigenvectors: np.ndarray) -> float:
    """max_i ‖M u_i - λ_i u_i‖∞"""
    if eigenvalues.size == 0:
        return 0.0
    mv = m @ eigenvectors
    return float(np.max(np.abs(mv - eigenvectors * eigenvalues)))


def smallest_eigenpairs(m, k: int, seed: int = 0, dense_limit: int = DENSE_LIMIT) -> SpectralProfile:
    """
    k smallest eigenpairs of a symmetric matrix, ascending.

    Args:
        m: dense ndarray or scipy sparse matrix, symmetric within 1e-10
        k: number of pairs, 1 <= k <= n
        seed: seeds the Lanczos start vector
        dense_limit: largest n solved densely

    Returns:
        SpectralProfile with orthonormal eigenvector columns

    Raises:
        ShapeError: non-square input or k outside [1, n]
        ConvergenceError: the iterative solver missed the residual bound
    """
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ShapeError(f"expected a square matrix, got shape {m.shape}")
    n = m.shape[0]
    if not 1 <= k <= n:
        raise ShapeError(f"k={k} outside [1, {n}]")
    asym = _asymmetry(m)
    if asym > SYMMETRY_TOL:
        raise ShapeError(f"matrix is not symmetric (max |M - Mᵀ| = {asym:.3e})")

    if n <= dense_limit or k >= n - 1:
        dense = m.toarray() if sp.issparse(m) else np.asarray(m, dtype=np.float64)
        # symmetrize exactly so LAPACK sees one triangle's values mirrored
        dense = 0.5 * (dense + dense.T)
        values, vectors = np.linalg.eigh(dense)
        values, vectors = values[:k], vectors[:, :k]
    else:
        rng = np.random.default_rng(seed)
        v0 = rng.standard_normal(n)
        operator = sp.csr_matrix(m) if sp.issparse(m) else np.asarray(m, dtype=np.float64)
        try:
            values, vectors = eigsh(
                operator, k=k, which="SA", tol=LANCZOS_TOL, v0=v0,
                maxiter=max(50 * k, 1000), ncv=min(n, max(2 * k + 1, 20)),
            )
        except (ArpackNoConvergence, ArpackError) as e:
            raise ConvergenceError(f"Lanczos did not converge for n={n}, k={k}: {e}") from e
        order = np.argsort(values, kind="stable")
        values, vectors = values[order], vectors[:, order]
        # re-orthonormalize within the returned block
        q, _ = np.linalg.qr(vectors)
        rayleigh = q.T @ (operator @ q)
        values, small = np.linalg.eigh(0.5 * (rayleigh + rayleigh.T))
        vectors = q @ small

        residual = residual_norm(operator, values, vectors)
        if residual > RESIDUAL_TOL:
            raise ConvergenceError(f"Lanczos residual {residual:.3e} exceeds {RESIDUAL_TOL:.0e}")
        logger.debug(f"Lanczos n={n} k={k} residual={residual:.2e}")

    return SpectralProfile(k=k, eigenvalues=np.asarray(values, dtype=np.float64),
                           eigenvectors=_canonical_signs(np.asarray(vectors, dtype=np.float64)))
