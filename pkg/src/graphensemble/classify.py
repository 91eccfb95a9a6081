"""
One-vs-rest L2 logistic regression and multi-label F1 metrics.

Per class the model minimizes

    sum_i log(1 + exp(-s_i (w.x_i + b))) + reg/2 |w|^2,    s_i in {-1, +1},

with the bias left unpenalized.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit, log_expit

logger = logging.getLogger(__name__)

GTOL = 1e-6
MAX_ITER = 1000


def _features(x):
    x = np.asarray(getattr(x, "values", x), dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("features must be a 2-D matrix")
    if not np.all(np.isfinite(x)):
        raise ValueError("features contain NaN or Inf")
    return x


def _targets(y):
    y = np.asarray(getattr(y, "assignment", y))
    if y.ndim == 1:
        y = y[:, None]
    return (y != 0).astype(np.float64)


def logistic_objective(wb, x, t, reg):
    """Penalized negative log-likelihood and its gradient; `wb` = (w, b), t in {0, 1}."""
    w, b = wb[:-1], wb[-1]
    z = x @ w + b
    s = 2.0 * t - 1.0
    loss = -np.sum(log_expit(s * z)) + 0.5 * reg * (w @ w)
    r = expit(z) - t
    grad = np.empty_like(wb)
    grad[:-1] = x.T @ r + reg * w
    grad[-1] = r.sum()
    return loss, grad


@dataclass
class OvrModel:
    weights: np.ndarray  # L x (d + 1), bias last
    reg: float
    constant: np.ndarray  # per class: prior probability if the class was degenerate, else NaN
    iterations: np.ndarray
    objectives: np.ndarray
    converged: np.ndarray = field(default=None)

    @property
    def label_count(self):
        return self.weights.shape[0]

    def decision_function(self, x):
        x = _features(x)
        return x @ self.weights[:, :-1].T + self.weights[:, -1]

    def predict_proba(self, x):
        p = expit(self.decision_function(x))
        flagged = ~np.isnan(self.constant)
        p[:, flagged] = self.constant[flagged]
        return p


def fit_binary(x, t, reg=1.0, gtol=GTOL, max_iter=MAX_ITER):
    """Returns (w_with_bias, objective, iterations, converged)."""
    wb0 = np.zeros(x.shape[1] + 1)
    res = minimize(logistic_objective, wb0, args=(x, t, reg), jac=True, method="L-BFGS-B",
                   options={"gtol": gtol, "ftol": 0.0, "maxiter": max_iter, "maxcor": 20})
    grad = logistic_objective(res.x, x, t, reg)[1]
    converged = bool(np.max(np.abs(grad)) <= gtol)
    return res.x, float(res.fun), int(res.nit), converged


def train_ovr(x, y, reg=1.0) -> OvrModel:
    x, t = _features(x), _targets(y)
    if x.shape[0] != t.shape[0]:
        raise ValueError(f"{x.shape[0]} feature rows vs {t.shape[0]} label rows")
    n_labels = t.shape[1]
    weights = np.zeros((n_labels, x.shape[1] + 1))
    constant = np.full(n_labels, np.nan)
    iters = np.zeros(n_labels, dtype=np.int64)
    objs = np.zeros(n_labels)
    conv = np.ones(n_labels, dtype=bool)
    for c in range(n_labels):
        pos = t[:, c].sum()
        if pos == 0 or pos == len(t):
            constant[c] = pos / max(len(t), 1)
            logger.debug("class %d has a single value in training; using constant %.3f", c, constant[c])
            continue
        weights[c], objs[c], iters[c], conv[c] = fit_binary(x, t[:, c], reg)
    if not conv.all():
        logger.warning("%d of %d classifiers stopped before the gradient tolerance", int((~conv).sum()), n_labels)
    return OvrModel(weights, float(reg), constant, iters, objs, conv)


def top_k_labels(proba, k_per_node) -> np.ndarray:
    """Binary matrix with the k_i most probable labels of row i (ties to the lower index)."""
    proba = np.asarray(proba, dtype=np.float64)
    k = np.broadcast_to(np.asarray(k_per_node, dtype=np.int64), (proba.shape[0],))
    if np.any(k < 1):
        raise ValueError("k_per_node entries must be >= 1")
    if np.any(k > proba.shape[1]):
        raise ValueError(f"k_per_node exceeds the label count {proba.shape[1]}")
    order = np.argsort(-proba, axis=1, kind="stable")
    out = np.zeros(proba.shape, dtype=np.int8)
    rank = np.empty_like(order)
    rows = np.arange(proba.shape[0])[:, None]
    rank[rows, order] = np.arange(proba.shape[1])[None, :]
    out[rank < k[:, None]] = 1
    return out


def predict_multilabel(model: OvrModel, x, k_per_node=None, threshold=None) -> np.ndarray:
    """Top-k_i prediction per node, or plain probability thresholding when `threshold` is set."""
    proba = model.predict_proba(x)
    if threshold is not None:
        return (proba >= threshold).astype(np.int8)
    if k_per_node is None:
        raise ValueError("need k_per_node unless a threshold is given")
    return top_k_labels(proba, k_per_node)


@dataclass(frozen=True)
class F1Report:
    macro_f1: float
    micro_f1: float
    per_class_f1: np.ndarray
    support: np.ndarray

    def to_dict(self, label_names=None):
        d = {
            "macro_f1": float(self.macro_f1),
            "micro_f1": float(self.micro_f1),
            "per_class_f1": [float(v) for v in self.per_class_f1],
            "support": [int(v) for v in self.support],
        }
        if label_names is not None:
            d["labels"] = list(label_names)
        return d


def _f1(tp, fp, fn):
    denom = 2 * tp + fp + fn
    return np.where(denom > 0, 2 * tp / np.maximum(denom, 1), 0.0)


def f1_report(pred, truth) -> F1Report:
    """
    Per-class F1 (0 when precision + recall is 0); macro averages over classes
    with positive support in `truth`; micro pools the confusion counts.
    """
    p, t = _targets(pred).astype(bool), _targets(truth).astype(bool)
    if p.shape != t.shape:
        raise ValueError(f"shape mismatch: prediction {p.shape} vs truth {t.shape}")
    tp = (p & t).sum(axis=0).astype(np.float64)
    fp = (p & ~t).sum(axis=0).astype(np.float64)
    fn = (~p & t).sum(axis=0).astype(np.float64)
    per_class = _f1(tp, fp, fn)
    support = t.sum(axis=0)
    present = support > 0
    macro = math.fsum(per_class[present]) / int(present.sum()) if present.any() else 0.0
    micro = float(_f1(tp.sum(), fp.sum(), fn.sum()))
    return F1Report(macro, micro, per_class, support)


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray

    def __call__(self, x):
        return (x - self.mean) / self.scale


def fit_standardizer(x, rows=None) -> Standardizer:
    x = _features(x)
    ref = x if rows is None else x[rows]
    mean = ref.mean(axis=0)
    std = ref.std(axis=0)
    return Standardizer(mean, np.where(std > 0, std, 1.0))


def concat_features(xs, train_rows=None) -> np.ndarray:
    """
    Column-wise concatenation in the given order, each block standardized with
    mean/std of `train_rows` (all rows when None).
    """
    xs = [_features(x) for x in xs]
    if not xs:
        raise ValueError("nothing to concatenate")
    n = xs[0].shape[0]
    for x in xs:
        if x.shape[0] != n:
            raise ValueError(f"row count mismatch: {x.shape[0]} vs {n}")
    return np.hstack([fit_standardizer(x, train_rows)(x) for x in xs])
