"""
HOPE: truncated SVD of a high-order proximity matrix, source and target
factors concatenated.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.linalg import ArpackNoConvergence, eigs, eigsh, svds

from ..graph import Graph
from .base import EmbeddingError, EmbeddingMatrix

SIMILARITIES = ("katz", "ppr", "common_neighbors", "adamic_adar")
DENSE_MAX_N = 500


def spectral_radius(a: sp.spmatrix, symmetric: bool) -> float:
    n = a.shape[0]
    if n <= DENSE_MAX_N:
        dense = a.toarray()
        vals = scipy.linalg.eigvalsh(dense) if symmetric else scipy.linalg.eigvals(dense)
        return float(np.max(np.abs(vals)))
    v0 = np.random.default_rng(0).uniform(0.5, 1.5, n)
    if symmetric:
        vals = eigsh(a, k=1, which="LM", v0=v0, return_eigenvectors=False)
    else:
        vals = eigs(a, k=1, which="LM", v0=v0, return_eigenvectors=False)
    return float(np.max(np.abs(vals)))


def similarity_matrix(g: Graph, similarity: str, beta: float):
    """Proximity matrix S; dense ndarray for katz/ppr, sparse for the neighbour kernels."""
    a = g.adjacency().astype(np.float64)
    n = g.node_count
    if similarity == "katz":
        rho = spectral_radius(a, symmetric=not g.directed)
        if beta * rho >= 1.0:
            raise EmbeddingError(f"Katz series diverges: beta={beta} >= 1/rho(A) = {1.0 / rho:.6g}")
        ad = a.toarray()
        return scipy.linalg.solve(np.eye(n) - beta * ad, beta * ad)
    if similarity == "ppr":
        out = np.asarray(a.sum(axis=1)).ravel()
        p = sp.diags(np.where(out > 0, 1.0 / np.maximum(out, 1e-300), 0.0)) @ a
        return (1.0 - beta) * scipy.linalg.inv(np.eye(n) - beta * p.toarray())
    if similarity == "common_neighbors":
        return (a @ a).tocsr()
    if similarity == "adamic_adar":
        deg = np.asarray(a.sum(axis=0)).ravel() + np.asarray(a.sum(axis=1)).ravel()
        inv = np.where(deg > 0, 1.0 / np.maximum(deg, 1e-300), 0.0)
        return (a @ sp.diags(inv) @ a).tocsr()
    raise ValueError(f"unknown similarity {similarity!r}; expected one of {SIMILARITIES}")


def truncated_svd(s, k: int, dense=None):
    """Top-k singular triplets in descending order, signs fixed per component."""
    n = s.shape[0]
    if dense is None:
        dense = n <= DENSE_MAX_N
    if k >= min(s.shape):
        raise EmbeddingError(f"hope: rank {k} must be below matrix size {min(s.shape)}")
    if dense:
        full = s.toarray() if sp.issparse(s) else s
        u, sig, vt = scipy.linalg.svd(full, full_matrices=False)
        u, sig, vt = u[:, :k], sig[:k], vt[:k]
    else:
        v0 = np.random.default_rng(0).uniform(0.5, 1.5, min(s.shape))
        try:
            u, sig, vt = svds(s, k=k, v0=v0, maxiter=20000, tol=1e-10)
        except ArpackNoConvergence:
            raise EmbeddingError(f"hope: truncated SVD did not converge (k={k})") from None
        order = np.argsort(-sig)
        u, sig, vt = u[:, order], sig[order], vt[order]
    idx = np.argmax(np.abs(u), axis=0)
    signs = np.sign(u[idx, np.arange(k)])
    signs[signs == 0] = 1.0
    return u * signs, sig, vt * signs[:, None]


def embed_hope(g: Graph, d: int, similarity="katz", beta=0.01, dense=None) -> EmbeddingMatrix:
    if d % 2:
        raise EmbeddingError(f"hope: dimension must be even, got {d}")
    s = similarity_matrix(g, similarity, beta)
    norm = sp.linalg.norm(s) if sp.issparse(s) else np.linalg.norm(s)
    if norm == 0:
        raise EmbeddingError(f"hope: {similarity} similarity matrix is zero")
    u, sig, vt = truncated_svd(s, d // 2, dense=dense)
    root = np.sqrt(sig)
    x = np.hstack([u * root, vt.T * root])
    return EmbeddingMatrix(x, "hope", {"similarity": similarity, "beta": beta}, None)
