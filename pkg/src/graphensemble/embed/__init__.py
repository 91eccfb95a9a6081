"""Embedding methods behind a common `fit_embedding(graph, method, dim, params, seed)` entry point."""

from __future__ import annotations

from .base import DEFAULT_DIMS, EmbeddingError, EmbeddingMatrix, HyperGrid, load_embedding, save_embedding
from .gf import embed_gf
from .hope import embed_hope
from .lap import embed_lap
from .node2vec import embed_node2vec, simulate_walks

METHODS = ("gf", "lap", "hope", "node2vec")

DEFAULT_GRIDS = {
    "gf": {"lr": [1e-3, 1e-2, 1e-1], "reg": [1e-1, 1.0, 10.0]},
    "lap": {},
    "hope": {"beta": [1e-4, 1e-3, 1e-2, 1e-1],
             "similarity": ["katz", "ppr", "common_neighbors", "adamic_adar"]},
    "node2vec": {"p": [0.25, 0.5, 1, 2, 4], "q": [0.25, 0.5, 1, 2, 4]},
}

NODE2VEC_WALK_KEYS = ("walk_len", "walks_per_node")


def default_grid(method: str) -> HyperGrid:
    return HyperGrid(method, {k: list(v) for k, v in DEFAULT_GRIDS[method].items()})


_walk_store: dict = {}


def _cached_walks(g, p, q, walk_len, walks_per_node, seed):
    key = (g.digest(), p, q, walk_len, walks_per_node, seed)
    if key not in _walk_store:
        if len(_walk_store) > 64:
            _walk_store.clear()
        _walk_store[key] = simulate_walks(g, p, q, walk_len, walks_per_node, seed)
    return _walk_store[key]


def fit_embedding(g, method: str, dim: int, params=None, seed=0) -> EmbeddingMatrix:
    """
    Fit one embedding. `params` mixes grid values and fixed settings
    (e.g. epochs, walk_len). The walk corpus of node2vec is shared across
    dimensions when the seed and walk settings agree.
    """
    params = dict(params or {})
    if method == "gf":
        return embed_gf(g, dim, seed=seed, **params)
    if method == "lap":
        return embed_lap(g, dim, **params)
    if method == "hope":
        return embed_hope(g, dim, **params)
    if method == "node2vec":
        import numpy as np

        walk_seed = int(np.random.default_rng(seed).integers(2**31, size=2)[0])
        walks = _cached_walks(g, params.get("p", 1.0), params.get("q", 1.0), params.get("walk_len", 80),
                              params.get("walks_per_node", 10), walk_seed)
        return embed_node2vec(g, dim, seed=seed, walks=walks, **params)
    raise ValueError(f"unknown embedding method {method!r}; expected one of {METHODS}")


__all__ = [
    "DEFAULT_DIMS", "DEFAULT_GRIDS", "METHODS", "EmbeddingError", "EmbeddingMatrix", "HyperGrid",
    "default_grid", "embed_gf", "embed_hope", "embed_lap", "embed_node2vec", "fit_embedding",
    "load_embedding", "save_embedding",
]
