"""
Synthetic benchmark graphs: four classical random graph models merged with
random cross edges, labelled by binned degree or closeness centrality.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import networkx as nx
import numpy as np
from scipy.sparse.csgraph import shortest_path

from .graph import Graph, LabelMatrix

KINDS = ("barabasi_albert", "watts_strogatz", "stochastic_block_model", "random_geometric")

DEFAULT_PARAMS = {
    "barabasi_albert": {"m": 2},
    "watts_strogatz": {"k": 4, "p": 0.1},
    "stochastic_block_model": {"sizes": [25, 25, 25, 25], "p_in": 0.3, "p_out": 0.01},
    "random_geometric": {"radius": 0.2},
}

RGG_MAX_ATTEMPTS = 100


@dataclass(frozen=True)
class SynthSpec:
    kind: str
    n: int = 100
    params: dict = field(default_factory=dict)
    seed: int = 0

    def resolved_params(self) -> dict:
        if self.kind not in KINDS:
            raise ValueError(f"unknown graph kind {self.kind!r}; expected one of {KINDS}")
        p = dict(DEFAULT_PARAMS[self.kind])
        p.update(self.params)
        return p

    def validate(self):
        p = self.resolved_params()
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.kind == "barabasi_albert":
            if not 1 <= p["m"] < self.n:
                raise ValueError(f"BA needs 1 <= m < n, got m={p['m']}, n={self.n}")
        elif self.kind == "watts_strogatz":
            if p["k"] % 2 or not 0 <= p["k"] < self.n:
                raise ValueError(f"WS needs even k < n, got k={p['k']}")
            _check_prob("p", p["p"])
        elif self.kind == "stochastic_block_model":
            if sum(p["sizes"]) != self.n:
                raise ValueError(f"SBM block sizes sum to {sum(p['sizes'])}, expected n={self.n}")
            _check_prob("p_in", p["p_in"])
            _check_prob("p_out", p["p_out"])
        elif self.kind == "random_geometric":
            if p["radius"] < 0:
                raise ValueError("radius must be non-negative")
        return p


def _check_prob(name, value):
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {value}")


def _from_nx(h: nx.Graph) -> Graph:
    h = nx.convert_node_labels_to_integers(h, ordering="sorted")
    return Graph.from_edges(h.number_of_nodes(), list(h.edges()), directed=False)


def generate(spec: SynthSpec) -> Graph:
    """Undirected simple graph from the named random model; deterministic in spec.seed."""
    p = spec.validate()
    n, seed = spec.n, spec.seed
    if spec.kind == "barabasi_albert":
        h = nx.barabasi_albert_graph(n, p["m"], seed=seed)
    elif spec.kind == "watts_strogatz":
        h = nx.watts_strogatz_graph(n, p["k"], p["p"], seed=seed)
    elif spec.kind == "stochastic_block_model":
        sizes = list(p["sizes"])
        probs = [[p["p_in"] if i == j else p["p_out"] for j in range(len(sizes))] for i in range(len(sizes))]
        h = nx.stochastic_block_model(sizes, probs, seed=seed)
    else:
        # resample until connected so closeness labels are defined
        rng = np.random.default_rng(seed)
        for _ in range(RGG_MAX_ATTEMPTS):
            h = nx.random_geometric_graph(n, p["radius"], seed=int(rng.integers(2**31)))
            if nx.is_connected(h):
                break
        else:
            raise RuntimeError(f"no connected random geometric graph after {RGG_MAX_ATTEMPTS} attempts")
    h.add_nodes_from(range(n))
    return _from_nx(h)


def pair_from_index(idx, n):
    """Decode the index of an unordered pair (i < j) in lexicographic order."""
    idx = np.asarray(idx, dtype=np.int64)
    rows = np.arange(max(n - 1, 1), dtype=np.int64)
    starts = rows * n - rows * (rows + 1) // 2
    i = np.searchsorted(starts, idx, side="right") - 1
    j = idx - starts[i] + i + 1
    return i, j


def disjoint_union(graphs) -> Graph:
    offset = 0
    edges, weights = [], []
    for g in graphs:
        edges.append(g.edges() + offset)
        weights.append(g.weight)
        offset += g.node_count
    return Graph.from_edges(offset, np.concatenate(edges), False, np.concatenate(weights))


def merge_with_random_edges(graphs, pair_fraction=0.4, accept_prob=0.3, seed=0) -> Graph:
    """
    Disjoint union plus random cross edges.

    floor(pair_fraction * N) unordered node pairs are drawn without replacement
    from all pairs of the union; each becomes an edge with probability
    accept_prob. Pairs that are already edges are left untouched.
    """
    graphs = list(graphs)
    if not graphs:
        raise ValueError("need at least one graph to merge")
    _check_prob("pair_fraction", pair_fraction)
    _check_prob("accept_prob", accept_prob)
    union = disjoint_union(graphs)
    n = union.node_count
    total_pairs = n * (n - 1) // 2
    n_pairs = min(int(np.floor(pair_fraction * n)), total_pairs)
    rng = np.random.default_rng(seed)
    picks = rng.choice(total_pairs, size=n_pairs, replace=False)
    accept = rng.random(n_pairs) < accept_prob
    i, j = pair_from_index(picks[accept], n)
    existing = set(zip(union.src.tolist(), union.dst.tolist()))
    new = [(a, b) for a, b in zip(i.tolist(), j.tolist()) if (a, b) not in existing]
    if not new:
        return union
    edges = np.concatenate([union.edges(), np.array(new, dtype=np.int64)])
    weights = np.concatenate([union.weight, np.ones(len(new))])
    return Graph.from_edges(n, edges, False, weights)


def quantile_bins(values, bins):
    """
    Equal-frequency binning.

    Boundaries are the linear-interpolated empirical quantiles at k/bins; a
    value's bin is the number of boundaries strictly below it, so equal values
    always share a bin. Unused bins are dropped and the rest renumbered.
    """
    if bins < 1:
        raise ValueError("bins must be >= 1")
    values = np.asarray(values, dtype=np.float64)
    bounds = np.quantile(values, np.arange(1, bins) / bins)
    raw = np.searchsorted(bounds, values, side="left")
    _, dense = np.unique(raw, return_inverse=True)
    return dense


def degree_labels(g: Graph, bins=8) -> LabelMatrix:
    return LabelMatrix.from_classes(quantile_bins(g.undirected_degree(), bins))


def closeness(g: Graph) -> np.ndarray:
    """(n-1) / sum of unweighted shortest-path distances; requires a connected graph."""
    a = g.adjacency()
    dist = shortest_path(a, directed=False, unweighted=True)
    if not np.all(np.isfinite(dist)):
        raise ValueError("closeness needs a connected graph; extract the largest WCC first")
    n = g.node_count
    if n == 1:
        return np.ones(1)
    return (n - 1) / dist.sum(axis=1)


def closeness_labels(g: Graph, bins=8) -> LabelMatrix:
    return LabelMatrix.from_classes(quantile_bins(closeness(g), bins))


def default_specs(n=100, seed=0):
    """The four 100-node graphs of the motivating experiment."""
    return [SynthSpec(kind, n, {}, seed + i) for i, kind in enumerate(KINDS)]
