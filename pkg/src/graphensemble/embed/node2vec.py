"""
node2vec: second-order biased random walks followed by skip-gram with
negative sampling. Both stages run single-threaded under numba so a fixed
seed gives bitwise-identical output.
"""

from __future__ import annotations

import logging

import numba
import numpy as np

from ..graph import Graph
from .base import EmbeddingError, EmbeddingMatrix

logger = logging.getLogger(__name__)


@numba.njit(cache=True)
def _seed(seed):
    np.random.seed(seed)


@numba.njit(cache=True)
def _is_neighbor(indptr, indices, t, x):
    lo = indptr[t]
    hi = indptr[t + 1]
    while lo < hi:
        mid = (lo + hi) // 2
        v = indices[mid]
        if v == x:
            return True
        if v < x:
            lo = mid + 1
        else:
            hi = mid
    return False


@numba.njit(cache=True)
def _choose(cum, start, stop):
    # cum holds running sums for slots start..stop-1
    r = np.random.random() * cum[stop - 1]
    lo = start
    hi = stop - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if cum[mid] > r:
            hi = mid
        else:
            lo = mid + 1
    return lo


@numba.njit(cache=True)
def next_step(indptr, indices, weights, prev, cur, inv_p, inv_q, cum):
    """Sample the node after `cur`, having arrived from `prev` (-1 at the walk start)."""
    start = indptr[cur]
    stop = indptr[cur + 1]
    total = 0.0
    for e in range(start, stop):
        x = indices[e]
        w = weights[e]
        if prev >= 0:
            if x == prev:
                w = w * inv_p
            elif not _is_neighbor(indptr, indices, prev, x):
                w = w * inv_q
        total += w
        cum[e] = total
    return indices[_choose(cum, start, stop)]


@numba.njit(cache=True)
def _simulate(indptr, indices, weights, starts, walk_len, inv_p, inv_q):
    walks = np.full((starts.shape[0], walk_len), -1, dtype=np.int64)
    cum = np.empty(indices.shape[0])
    for r in range(starts.shape[0]):
        cur = starts[r]
        prev = -1
        walks[r, 0] = cur
        for s in range(1, walk_len):
            if indptr[cur + 1] == indptr[cur]:
                break
            nxt = next_step(indptr, indices, weights, prev, cur, inv_p, inv_q, cum)
            prev = cur
            cur = nxt
            walks[r, s] = cur
    return walks


def _csr(g: Graph):
    a = g.adjacency()
    return (a.indptr.astype(np.int64), a.indices.astype(np.int64), a.data.astype(np.float64))


def simulate_walks(g: Graph, p=1.0, q=1.0, walk_len=80, walks_per_node=10, seed=0):
    """
    `walks_per_node` passes over all nodes in a fresh random order. Walks stop
    early at nodes without out-neighbours; unused slots hold -1.
    """
    if p <= 0 or q <= 0:
        raise ValueError("node2vec p and q must be positive")
    indptr, indices, weights = _csr(g)
    rng = np.random.default_rng(seed)
    starts = np.concatenate([rng.permutation(g.node_count) for _ in range(walks_per_node)]).astype(np.int64)
    _seed(int(rng.integers(2**31)))
    return _simulate(indptr, indices, weights, starts, int(walk_len), 1.0 / p, 1.0 / q)


def transition_counts(g: Graph, prev: int, cur: int, p, q, steps=100000, seed=0):
    """Empirical distribution of the step after (prev -> cur); prev=-1 for a first-order step."""
    indptr, indices, weights = _csr(g)
    _seed(seed)
    return _count_steps(indptr, indices, weights, prev, cur, 1.0 / p, 1.0 / q, steps, g.node_count)


@numba.njit(cache=True)
def _count_steps(indptr, indices, weights, prev, cur, inv_p, inv_q, steps, n):
    counts = np.zeros(n, dtype=np.int64)
    cum = np.empty(indices.shape[0])
    for _ in range(steps):
        counts[next_step(indptr, indices, weights, prev, cur, inv_p, inv_q, cum)] += 1
    return counts


NEG_TABLE_SIZE = 100_000
EXP_TABLE_SIZE = 1000
MAX_EXP = 6.0


def _exp_table():
    x = (np.arange(EXP_TABLE_SIZE) / EXP_TABLE_SIZE * 2 - 1) * MAX_EXP
    return (1.0 / (1.0 + np.exp(-x))).astype(np.float32)


def _negative_table(counts, size=NEG_TABLE_SIZE):
    """Node ids laid out proportionally to count**0.75."""
    weights = counts ** 0.75
    edges = np.cumsum(weights) / weights.sum()
    slots = (np.arange(size) + 0.5) / size
    return np.minimum(np.searchsorted(edges, slots, side="right"), len(counts) - 1).astype(np.int32)


@numba.njit(cache=True, fastmath=True)
def _train_sgns(walks, syn0, syn1, neg_table, exp_table, window, negative, epochs, alpha0, min_alpha, state):
    # linear congruential generator of the reference word2vec code; far cheaper
    # than numpy's generator in this inner loop
    mult = np.uint64(25214903917)
    inc = np.uint64(11)
    rnd = np.uint64(state)
    n_walks, walk_len = walks.shape
    d = syn0.shape[1]
    n_table = neg_table.shape[0]
    n_exp = exp_table.shape[0]
    scale = n_exp / MAX_EXP / 2.0
    lengths = np.zeros(n_walks, dtype=np.int64)
    total = 0
    for r in range(n_walks):
        m = 0
        while m < walk_len and walks[r, m] >= 0:
            m += 1
        lengths[r] = m
        total += m
    total_words = total * epochs
    done = 0
    neu = np.empty(d, dtype=np.float32)
    for ep in range(epochs):
        for r in range(n_walks):
            m = lengths[r]
            for pos in range(m):
                alpha = np.float32(alpha0 - (alpha0 - min_alpha) * done / total_words)
                done += 1
                word = walks[r, pos]
                rnd = rnd * mult + inc
                b = int((rnd >> np.uint64(16)) % np.uint64(window))
                lo = max(0, pos - window + b)
                hi = min(m, pos + window - b + 1)
                for c in range(lo, hi):
                    if c == pos:
                        continue
                    ctx = walks[r, c]
                    for k in range(d):
                        neu[k] = 0.0
                    for s in range(negative + 1):
                        if s == 0:
                            target = word
                            label = np.float32(1.0)
                        else:
                            rnd = rnd * mult + inc
                            target = neg_table[int((rnd >> np.uint64(16)) % np.uint64(n_table))]
                            if target == word:
                                continue
                            label = np.float32(0.0)
                        f = np.float32(0.0)
                        for k in range(d):
                            f += syn0[ctx, k] * syn1[target, k]
                        if f >= MAX_EXP:
                            sig = np.float32(1.0)
                        elif f <= -MAX_EXP:
                            sig = np.float32(0.0)
                        else:
                            sig = exp_table[int((f + MAX_EXP) * scale)]
                        gr = (label - sig) * alpha
                        for k in range(d):
                            neu[k] += gr * syn1[target, k]
                            syn1[target, k] += gr * syn0[ctx, k]
                    for k in range(d):
                        syn0[ctx, k] += neu[k]


def train_skipgram(walks, n_nodes, d, window=10, negative=5, epochs=5, alpha=0.025,
                   min_alpha=0.0001 * 0.025, seed=0):
    """Skip-gram with negative sampling over a walk corpus; returns the input vectors."""
    tokens = walks[walks >= 0]
    if tokens.size == 0:
        raise EmbeddingError("node2vec: empty walk corpus")
    counts = np.bincount(tokens, minlength=n_nodes).astype(np.float64)
    rng = np.random.default_rng(seed)
    syn0 = ((rng.random((n_nodes, d)) - 0.5) / d).astype(np.float32)
    syn1 = np.zeros((n_nodes, d), dtype=np.float32)
    _train_sgns(walks, syn0, syn1, _negative_table(counts), _exp_table(), int(window), int(negative),
                int(epochs), float(alpha), float(min_alpha), int(rng.integers(2**62)))
    return syn0.astype(np.float64)


def embed_node2vec(g: Graph, d: int, p=1.0, q=1.0, walk_len=80, walks_per_node=10, window=10,
                   negative=5, epochs=5, seed=0, walks=None) -> EmbeddingMatrix:
    if g.node_count == 0:
        raise EmbeddingError("node2vec: empty graph")
    rng = np.random.default_rng(seed)
    walk_seed, train_seed = (int(s) for s in rng.integers(2**31, size=2))
    if walks is None:
        walks = simulate_walks(g, p, q, walk_len, walks_per_node, walk_seed)
    x = train_skipgram(walks, g.node_count, d, window, negative, epochs, seed=train_seed)
    hp = {"p": p, "q": q, "walk_len": walk_len, "walks_per_node": walks_per_node, "window": window}
    return EmbeddingMatrix(x, "node2vec", hp, seed)
