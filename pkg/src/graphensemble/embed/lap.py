from __future__ import annotations

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.linalg import ArpackNoConvergence, eigsh

from ..graph import Graph
from .base import EmbeddingError, EmbeddingMatrix

DENSE_MAX_N = 500
ARPACK_MAXITER = 10000


def fix_signs(v: np.ndarray) -> np.ndarray:
    """Flip columns so the entry of largest magnitude is positive."""
    idx = np.argmax(np.abs(v), axis=0)
    signs = np.sign(v[idx, np.arange(v.shape[1])])
    signs[signs == 0] = 1.0
    return v * signs


def laplacian_spectrum(g: Graph, k: int, dense=None):
    """
    Smallest k eigenpairs of L y = lam D y with L = D - W, W the symmetrized
    adjacency. Eigenvectors are D-normalized (y^T D y = 1), eigenvalues ascending.
    """
    w = g.symmetric_adjacency()
    deg = np.asarray(w.sum(axis=1)).ravel()
    if np.any(deg <= 0):
        raise EmbeddingError("lap: isolated node; run largest_wcc first")
    n = g.node_count
    if dense is None:
        dense = n <= DENSE_MAX_N
    if dense:
        dm = np.diag(deg)
        lam, y = scipy.linalg.eigh(dm - w.toarray(), dm, subset_by_index=[0, k - 1])
        return lam, y
    # Lanczos on the normalized adjacency: its largest eigenvalues are 1 - lam
    dinv = 1.0 / np.sqrt(deg)
    m = sp.diags(dinv) @ w @ sp.diags(dinv)
    v0 = np.random.default_rng(0).uniform(0.5, 1.5, n)
    try:
        mu, z = eigsh(m, k=k, which="LA", v0=v0, maxiter=ARPACK_MAXITER, tol=1e-10)
    except ArpackNoConvergence as exc:
        raise EmbeddingError(f"lap: eigensolver did not converge within {ARPACK_MAXITER} iterations "
                             f"({len(exc.eigenvalues)} of {k} eigenpairs found)") from None
    order = np.argsort(-mu)
    lam = 1.0 - mu[order]
    y = dinv[:, None] * z[:, order]
    return lam, y


def embed_lap(g: Graph, d: int, dense=None) -> EmbeddingMatrix:
    """Laplacian Eigenmaps: eigenvectors of the d smallest non-trivial eigenvalues."""
    if not g.is_connected():
        raise EmbeddingError("lap: graph must be connected; run largest_wcc first")
    if d >= g.node_count - 1:
        raise EmbeddingError(f"lap: dimension {d} must be < n - 1 = {g.node_count - 1}")
    _, y = laplacian_spectrum(g, d + 1, dense=dense)
    # column 0 is the constant vector of eigenvalue 0
    return EmbeddingMatrix(fix_signs(y[:, 1:]), "lap", {}, None)
