"""
Graph data model, edge-list / label ingestion and connected-component extraction.

Node ids are always dense integers 0..n-1. Loaders return the mapping from
the original (string) ids to dense ids so labels can be aligned.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import breadth_first_order, connected_components

logger = logging.getLogger(__name__)


class GraphFormatError(ValueError):
    """Malformed edge-list, label or embedding file."""


@dataclass(frozen=True, eq=False)
class Graph:
    """
    Simple weighted graph.

    src, dst, weight : parallel arrays of edges. For undirected graphs each
    edge is stored once with src < dst.
    """

    node_count: int
    directed: bool
    src: np.ndarray
    dst: np.ndarray
    weight: np.ndarray
    _adj: dict = field(default_factory=dict, repr=False, compare=False)

    @classmethod
    def from_edges(cls, node_count, edges, directed=False, weights=None):
        """Build a graph, dropping self-loops and summing duplicate edges."""
        if node_count < 1:
            raise ValueError("node_count must be >= 1")
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if weights is None:
            weights = np.ones(len(edges))
        weights = np.asarray(weights, dtype=np.float64)
        if len(weights) != len(edges):
            raise ValueError("weights and edges differ in length")
        if len(edges) and (edges.min() < 0 or edges.max() >= node_count):
            raise ValueError("edge endpoint out of range")
        if np.any(weights <= 0) or not np.all(np.isfinite(weights)):
            raise ValueError("edge weights must be positive and finite")

        u, v = edges[:, 0], edges[:, 1]
        loops = u == v
        if loops.any():
            logger.warning("dropped %d self-loops", int(loops.sum()))
            u, v, weights = u[~loops], v[~loops], weights[~loops]
        if not directed:
            u, v = np.minimum(u, v), np.maximum(u, v)
        # merge duplicates through a COO -> CSR conversion (sums repeated entries)
        m = sp.coo_matrix((weights, (u, v)), shape=(node_count, node_count)).tocsr()
        m.sum_duplicates()
        m.sort_indices()
        coo = m.tocoo()
        order = np.lexsort((coo.col, coo.row))
        src = coo.row[order].astype(np.int64)
        dst = coo.col[order].astype(np.int64)
        w = coo.data[order].astype(np.float64)
        for a in (src, dst, w):
            a.setflags(write=False)
        return cls(int(node_count), bool(directed), src, dst, w)

    @property
    def edge_count(self) -> int:
        return len(self.src)

    def edges(self) -> np.ndarray:
        return np.column_stack([self.src, self.dst])

    def adjacency(self) -> sp.csr_matrix:
        """Row-major adjacency; symmetric for undirected graphs."""
        if "A" not in self._adj:
            n = self.node_count
            if self.directed:
                rows, cols, w = self.src, self.dst, self.weight
            else:
                rows = np.concatenate([self.src, self.dst])
                cols = np.concatenate([self.dst, self.src])
                w = np.concatenate([self.weight, self.weight])
            a = sp.csr_matrix((w, (rows, cols)), shape=(n, n))
            a.sort_indices()
            self._adj["A"] = a
        return self._adj["A"]

    def symmetric_adjacency(self) -> sp.csr_matrix:
        """(A + A^T) / 2 for directed graphs, A otherwise."""
        a = self.adjacency()
        if not self.directed:
            return a
        s = ((a + a.T) * 0.5).tocsr()
        s.sort_indices()
        return s

    def undirected_degree(self) -> np.ndarray:
        """Number of distinct neighbours ignoring direction."""
        a = self.adjacency()
        b = (a + a.T).tocsr() if self.directed else a
        return np.diff(b.indptr).astype(np.int64)

    def is_connected(self) -> bool:
        ncomp, _ = connected_components(self.adjacency(), directed=self.directed, connection="weak")
        return ncomp == 1

    def digest(self) -> str:
        """Stable content hash, used for cache keys."""
        import hashlib

        h = hashlib.sha1()
        h.update(f"{self.node_count}:{int(self.directed)}:".encode())
        for a in (self.src, self.dst, self.weight):
            h.update(np.ascontiguousarray(a).tobytes())
        return h.hexdigest()[:16]

    def __repr__(self):
        kind = "directed" if self.directed else "undirected"
        return f"Graph(n={self.node_count}, edges={self.edge_count}, {kind})"


@dataclass(frozen=True)
class LabelMatrix:
    """Binary n x L multi-label assignment."""

    assignment: np.ndarray
    label_names: tuple = ()
    partial: bool = False

    def __post_init__(self):
        y = np.asarray(self.assignment)
        if y.ndim != 2:
            raise ValueError("label assignment must be 2-D")
        y = (y != 0).astype(np.int8)
        object.__setattr__(self, "assignment", y)
        if not self.label_names:
            object.__setattr__(self, "label_names", tuple(str(i) for i in range(y.shape[1])))
        if len(self.label_names) != y.shape[1]:
            raise ValueError("label_names length does not match label count")
        empty = np.flatnonzero(y.sum(axis=0) == 0)
        if len(empty):
            raise ValueError(f"classes without positive nodes: {[self.label_names[i] for i in empty]}")
        if not self.partial and np.any(y.sum(axis=1) == 0):
            raise ValueError("unlabelled nodes present; pass partial=True for partially labelled data")

    @property
    def node_count(self) -> int:
        return self.assignment.shape[0]

    @property
    def label_count(self) -> int:
        return self.assignment.shape[1]

    def labelled_nodes(self) -> np.ndarray:
        return np.flatnonzero(self.assignment.sum(axis=1) > 0)

    def subset(self, nodes) -> "LabelMatrix":
        """Rows `nodes` (new order); classes that lose all positives are dropped."""
        y = self.assignment[np.asarray(nodes)]
        keep = y.sum(axis=0) > 0
        names = tuple(n for n, k in zip(self.label_names, keep) if k)
        partial = self.partial or bool(np.any(y[:, keep].sum(axis=1) == 0))
        return LabelMatrix(y[:, keep], names, partial)

    @classmethod
    def from_classes(cls, classes, names=None) -> "LabelMatrix":
        """One label per node from an integer class vector."""
        classes = np.asarray(classes)
        uniq = np.unique(classes)
        y = (classes[:, None] == uniq[None, :]).astype(np.int8)
        if names is None:
            names = tuple(str(u) for u in uniq)
        return cls(y, tuple(names))


def _read_lines(path):
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if line:
                yield lineno, line.split()


def load_edge_list(path, directed=False):
    """
    Read a whitespace separated `src dst [weight]` file.

    Returns
    -------
    graph : Graph
    node_map : dict
        original id (str) -> dense id, in order of first appearance.
    """
    node_map: dict[str, int] = {}
    edges, weights = [], []
    for lineno, tok in _read_lines(path):
        if len(tok) not in (2, 3):
            raise GraphFormatError(f"{path}:{lineno}: expected 'src dst [weight]', got {len(tok)} fields")
        w = 1.0
        if len(tok) == 3:
            try:
                w = float(tok[2])
            except ValueError:
                raise GraphFormatError(f"{path}:{lineno}: bad weight {tok[2]!r}") from None
            if not np.isfinite(w) or w <= 0:
                raise GraphFormatError(f"{path}:{lineno}: weight must be positive, got {tok[2]!r}")
        ids = [node_map.setdefault(t, len(node_map)) for t in tok[:2]]
        edges.append(ids)
        weights.append(w)
    if not edges:
        raise GraphFormatError(f"{path}: empty edge list")
    g = Graph.from_edges(len(node_map), edges, directed=directed, weights=weights)
    logger.info("loaded %s from %s", g, path)
    return g, node_map


def load_labels(path, node_map, node_count=None, partial=None):
    """
    Read `node label1 label2 ...` lines into a LabelMatrix aligned with node_map.

    Nodes of the graph absent from the file get an all-zero row, which makes the
    matrix partial.
    """
    n = len(node_map) if node_count is None else node_count
    label_ids: dict[str, int] = {}
    rows, cols = [], []
    missing = []
    for lineno, tok in _read_lines(path):
        node = tok[0]
        if node not in node_map:
            missing.append(node)
            continue
        for lab in tok[1:]:
            rows.append(node_map[node])
            cols.append(label_ids.setdefault(lab, len(label_ids)))
    if missing:
        shown = ", ".join(missing[:10]) + (" ..." if len(missing) > 10 else "")
        raise GraphFormatError(f"{path}: {len(missing)} node ids not in graph: {shown}")
    if not label_ids:
        raise GraphFormatError(f"{path}: no labels")
    y = np.zeros((n, len(label_ids)), dtype=np.int8)
    y[rows, cols] = 1
    if partial is None:
        partial = bool(np.any(y.sum(axis=1) == 0))
    return LabelMatrix(y, tuple(label_ids), partial=partial)


def write_edge_list(g: Graph, path, weights=None):
    """Write `src dst [weight]`; weights are written only if some differ from 1."""
    if weights is None:
        weights = bool(np.any(g.weight != 1.0))
    with open(path, "w", encoding="utf-8") as fh:
        for s, d, w in zip(g.src.tolist(), g.dst.tolist(), g.weight.tolist()):
            fh.write(f"{s} {d} {w!r}\n" if weights else f"{s} {d}\n")


def write_labels(labels: LabelMatrix, path, node_names=None):
    y = labels.assignment
    with open(path, "w", encoding="utf-8") as fh:
        for i in range(y.shape[0]):
            labs = [labels.label_names[j] for j in np.flatnonzero(y[i])]
            if labs:
                name = i if node_names is None else node_names[i]
                fh.write(f"{name} {' '.join(labs)}\n")


def induced_subgraph(g: Graph, nodes) -> Graph:
    """Subgraph on `nodes` (sorted old ids), re-indexed in that order."""
    nodes = np.asarray(nodes, dtype=np.int64)
    remap = -np.ones(g.node_count, dtype=np.int64)
    remap[nodes] = np.arange(len(nodes))
    keep = (remap[g.src] >= 0) & (remap[g.dst] >= 0)
    edges = np.column_stack([remap[g.src[keep]], remap[g.dst[keep]]])
    return Graph.from_edges(len(nodes), edges, g.directed, g.weight[keep])


def largest_wcc(g: Graph):
    """
    Largest weakly connected component.

    Ties on size go to the component containing the smallest node id. Returns
    the re-indexed subgraph and an array mapping new ids to old ids.
    """
    _, comp = connected_components(g.adjacency(), directed=g.directed, connection="weak")
    sizes = np.bincount(comp)
    tied = np.flatnonzero(sizes == sizes.max())
    smallest = np.full(len(sizes), g.node_count)
    np.minimum.at(smallest, comp, np.arange(g.node_count))
    winner = int(tied[np.argmin(smallest[tied])])
    old = np.flatnonzero(comp == winner)
    if len(old) == g.node_count:
        return g, np.arange(g.node_count)
    return induced_subgraph(g, old), old


def bfs_reaches_all(g: Graph, start=0) -> bool:
    a = g.adjacency()
    if g.directed:
        a = (a + a.T).tocsr()
    order = breadth_first_order(a, start, directed=False, return_predecessors=False)
    return len(order) == g.node_count
