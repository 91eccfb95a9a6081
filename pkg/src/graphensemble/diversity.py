"""
Dependence between embedding matrices: distance covariance / correlation
(V-statistic, doubly centered Euclidean distance matrices) and the RV
coefficient.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist, pdist, squareform

STREAMING_MIN_N = 20000
BLOCK_ROWS = 2048


class DegenerateEmbeddingError(ValueError):
    pass


def _values(x) -> np.ndarray:
    v = getattr(x, "values", x)
    v = np.asarray(v, dtype=np.float64)
    if v.ndim == 1:
        v = v[:, None]
    return v


def pairwise_distances(x) -> np.ndarray:
    """Euclidean distances between all rows."""
    v = _values(x)
    if v.shape[0] < 2:
        return np.zeros((v.shape[0], v.shape[0]))
    return squareform(pdist(v, "euclidean"))


def double_center(s) -> np.ndarray:
    s = np.asarray(s, dtype=np.float64)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise ValueError("double_center needs a square matrix")
    row = s.mean(axis=1, keepdims=True)
    col = s.mean(axis=0, keepdims=True)
    return s - row - col + s.mean()


def _check_pair(x, y):
    if x.shape[0] != y.shape[0]:
        raise ValueError(f"row count mismatch: {x.shape[0]} vs {y.shape[0]}")
    if x.shape[0] < 2:
        raise ValueError("distance covariance needs at least 2 rows")


def _dcov_terms_dense(x, y):
    a = double_center(pairwise_distances(x))
    # sum(A * B) equals sum(A * b) because A has zero row and column sums
    b = pairwise_distances(y)
    n2 = float(x.shape[0]) ** 2
    xy = np.sum(a * b) / n2
    xx = np.sum(a * a) / n2
    bb = double_center(b)
    yy = np.sum(bb * bb) / n2
    return xy, xx, yy


def _dcov_terms_blocked(x, y, block=BLOCK_ROWS):
    """Two passes over row blocks; memory O(block * n). Fixed block order keeps the sum deterministic."""
    n = x.shape[0]
    row_a = np.empty(n)
    row_b = np.empty(n)
    for s in range(0, n, block):
        row_a[s:s + block] = cdist(x[s:s + block], x).mean(axis=1)
        row_b[s:s + block] = cdist(y[s:s + block], y).mean(axis=1)
    ga, gb = row_a.mean(), row_b.mean()
    xy = xx = yy = 0.0
    for s in range(0, n, block):
        a = cdist(x[s:s + block], x) - row_a[s:s + block, None] - row_a[None, :] + ga
        b = cdist(y[s:s + block], y) - row_b[s:s + block, None] - row_b[None, :] + gb
        xy += np.sum(a * b)
        xx += np.sum(a * a)
        yy += np.sum(b * b)
    n2 = float(n) ** 2
    return xy / n2, xx / n2, yy / n2


def dcov_terms(x, y, streaming=None):
    """(dCov^2(X,Y), dCov^2(X,X), dCov^2(Y,Y)), each clamped at 0."""
    x, y = _values(x), _values(y)
    _check_pair(x, y)
    if streaming is None:
        streaming = x.shape[0] > STREAMING_MIN_N
    terms = _dcov_terms_blocked(x, y) if streaming else _dcov_terms_dense(x, y)
    return tuple(max(t, 0.0) for t in terms)


def dcov2(x, y, streaming=None) -> float:
    x, y = _values(x), _values(y)
    _check_pair(x, y)
    if streaming is None:
        streaming = x.shape[0] > STREAMING_MIN_N
    if streaming:
        return dcov_terms(x, y, True)[0]
    a = double_center(pairwise_distances(x))
    return max(float(np.sum(a * pairwise_distances(y))) / float(x.shape[0]) ** 2, 0.0)


def _dcor_from_terms(xy, xx, yy):
    if xx <= 0 or yy <= 0:
        raise DegenerateEmbeddingError("undefined distance correlation: an input has identical rows")
    return float(min(max(np.sqrt(xy / np.sqrt(xx * yy)), 0.0), 1.0))


def dcor(x, y, streaming=None) -> float:
    """Distance correlation dCov(X,Y) / sqrt(dCov(X,X) dCov(Y,Y)), in [0, 1]."""
    return _dcor_from_terms(*dcov_terms(x, y, streaming))


def rv_coefficient(x, y) -> float:
    x, y = _values(x), _values(y)
    if x.shape[0] != y.shape[0]:
        raise ValueError(f"row count mismatch: {x.shape[0]} vs {y.shape[0]}")
    x = x - x.mean(axis=0)
    y = y - y.mean(axis=0)
    # <XX^T, YY^T>_F = |X^T Y|_F^2 and |XX^T|_F = |X^T X|_F
    nx_ = np.linalg.norm(x.T @ x)
    ny_ = np.linalg.norm(y.T @ y)
    if nx_ == 0 or ny_ == 0:
        raise DegenerateEmbeddingError("RV coefficient undefined: matrix is zero after centering")
    return float(min(max(np.linalg.norm(x.T @ y) ** 2 / (nx_ * ny_), 0.0), 1.0))


@dataclass(frozen=True)
class CorrelationReport:
    method_ids: tuple
    dcor: np.ndarray | None = None
    rv: np.ndarray | None = None

    def matrix(self, measure="dcor") -> np.ndarray:
        m = getattr(self, measure)
        if m is None:
            raise ValueError(f"report holds no {measure} values")
        return m

    def to_csv(self, path, measure="dcor"):
        m = self.matrix(measure)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(self.method_ids)
            for row in m:
                w.writerow([f"{v:.6f}" for v in row])

    @staticmethod
    def read_csv(path):
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        return tuple(rows[0]), np.array([[float(v) for v in r] for r in rows[1:]])


def _method_id(emb, i):
    return getattr(emb, "method_id", None) or f"m{i}"


def correlation_matrix(embeddings, measure="dcor", ids=None) -> CorrelationReport:
    """All-pairs dCor (or RV, or both with measure='both') between embeddings of the same graph."""
    embeddings = list(embeddings)
    if not embeddings:
        raise ValueError("no embeddings given")
    ids = tuple(ids) if ids is not None else tuple(_method_id(e, i) for i, e in enumerate(embeddings))
    vals = [_values(e) for e in embeddings]
    n = vals[0].shape[0]
    for mid, v in zip(ids, vals):
        if v.shape[0] != n:
            raise ValueError(f"{mid}: {v.shape[0]} rows, expected {n}")
    k = len(vals)
    dc = rv = None
    if measure in ("dcor", "both"):
        dc = np.eye(k)
        if n <= STREAMING_MIN_N:
            centered = [double_center(pairwise_distances(v)) for v in vals]
            var = [np.sum(c * c) / n**2 for c in centered]
            for mid, s in zip(ids, var):
                if s <= 0:
                    raise DegenerateEmbeddingError(f"{mid}: undefined distance correlation (identical rows)")
            for i in range(k):
                for j in range(i + 1, k):
                    xy = max(np.sum(centered[i] * centered[j]) / n**2, 0.0)
                    dc[i, j] = dc[j, i] = _dcor_from_terms(xy, var[i], var[j])
        else:
            for i in range(k):
                for j in range(i + 1, k):
                    try:
                        dc[i, j] = dc[j, i] = dcor(vals[i], vals[j], streaming=True)
                    except DegenerateEmbeddingError as exc:
                        raise DegenerateEmbeddingError(f"{ids[i]} / {ids[j]}: {exc}") from None
    if measure in ("rv", "both"):
        rv = np.eye(k)
        for i in range(k):
            for j in range(i + 1, k):
                try:
                    rv[i, j] = rv[j, i] = rv_coefficient(vals[i], vals[j])
                except DegenerateEmbeddingError as exc:
                    raise DegenerateEmbeddingError(f"{ids[i]} / {ids[j]}: {exc}") from None
    if dc is None and rv is None:
        raise ValueError(f"unknown measure {measure!r}; expected dcor, rv or both")
    return CorrelationReport(ids, dc, rv)


def structural_bound(x, y, groups):
    """
    Informational only: dCor next to the bound 1 - sum(|V_i|)/n for user-declared
    sets of structurally equivalent nodes. Nothing here certifies the bound.
    """
    n = _values(x).shape[0]
    covered = sum(len(gr) for gr in groups)
    return {"dcor": dcor(x, y), "bound": 1.0 - covered / n, "n": n, "covered": covered}
