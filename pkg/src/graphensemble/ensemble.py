"""
Greedy graph-embedding ensemble search.

Per round: split the labelled nodes, pick the best hyperparameters of every
method at every dimension by validation macro-F1, then start from the best
single method and append the remaining methods in order of their validation
score, keeping an addition only when it strictly raises validation macro-F1.
"""

from __future__ import annotations

import hashlib
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .classify import concat_features, f1_report, predict_multilabel, train_ovr
from .embed import EmbeddingError, EmbeddingMatrix, HyperGrid, fit_embedding, load_embedding, save_embedding

logger = logging.getLogger(__name__)

FRACTIONS = (0.5, 0.2, 0.3)
TIE_TOL = 1e-9


class LeakageError(RuntimeError):
    """Test rows were requested more than once in a round."""


def derive_seed(base_seed, *parts) -> int:
    h = hashlib.sha256(json.dumps([int(base_seed), *map(str, parts)]).encode()).digest()
    return int.from_bytes(h[:4], "little") & 0x7FFFFFFF


# -- splits -----------------------------------------------------------------


@dataclass(frozen=True)
class SplitIndices:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray
    seed: int

    def sizes(self):
        return len(self.train), len(self.val), len(self.test)


def split_sizes(n, fractions=FRACTIONS):
    """Largest-remainder rounding; ties in the remainder go to train, then val, then test."""
    fractions = np.asarray(fractions, dtype=np.float64)
    if len(fractions) != 3 or np.any(fractions < 0) or abs(fractions.sum() - 1.0) > 1e-9:
        raise ValueError(f"split fractions must be three non-negative numbers summing to 1, got {fractions}")
    exact = fractions * n
    sizes = np.floor(exact + 1e-9).astype(int)
    rem = exact - sizes
    for i in sorted(range(3), key=lambda i: (-round(rem[i], 9), i))[: n - sizes.sum()]:
        sizes[i] += 1
    return tuple(int(s) for s in sizes)


def split_nodes(nodes, fractions=FRACTIONS, seed=0) -> SplitIndices:
    """Uniform random train/val/test partition of `nodes` (an int n means range(n))."""
    nodes = np.arange(nodes) if np.isscalar(nodes) else np.asarray(nodes, dtype=np.int64)
    if len(nodes) < 10:
        raise ValueError("need at least 10 labelled nodes to split")
    a, b, _ = split_sizes(len(nodes), fractions)
    perm = np.random.default_rng(seed).permutation(nodes)
    return SplitIndices(np.sort(perm[:a]), np.sort(perm[a:a + b]), np.sort(perm[a + b:]), int(seed))


class LabelAccess:
    """
    Label/row accessor for one round. Train and validation rows can be read
    freely; the test rows exactly once.
    """

    def __init__(self, labels, split: SplitIndices):
        self.y = np.asarray(getattr(labels, "assignment", labels))
        self.split = split
        self.test_reads = 0

    @property
    def train(self):
        return self.split.train

    @property
    def val(self):
        return self.split.val

    def labels(self, rows):
        return self.y[rows]

    def take_test(self):
        if self.test_reads:
            raise LeakageError("test rows already used in this round")
        self.test_reads += 1
        return self.split.test, self.y[self.split.test]


# -- embedding store --------------------------------------------------------


def _canonical(params) -> str:
    return json.dumps(params, sort_keys=True, default=str)


def _fit_job(args):
    g, method, dim, params, seed = args
    try:
        return fit_embedding(g, method, dim, params, seed), None
    except (EmbeddingError, ValueError, np.linalg.LinAlgError) as exc:
        return None, f"{type(exc).__name__}: {exc}"


class EmbeddingStore:
    """
    Fits embeddings once per (method, dimension, parameters) and keeps them in
    memory and, when `cache_dir` is set, on disk as `<method>_<dim>_<hash>.emb`.
    Seeds come from (base_seed, method, parameters), not from the dimension.
    """

    def __init__(self, graph, base_seed=0, cache_dir=None, external=None):
        self.graph = graph
        self.base_seed = int(base_seed)
        self.cache_dir = Path(cache_dir) if cache_dir else None
        self.external = external or {}
        self.memory: dict = {}
        self.failures: dict = {}
        self.fits = 0
        self.disk_hits = 0
        if self.cache_dir:
            self.cache_dir.mkdir(parents=True, exist_ok=True)

    def seed_for(self, method, params):
        return derive_seed(self.base_seed, method, _canonical(params))

    def key(self, method, dim, params):
        return (method, int(dim), _canonical(params))

    def path_for(self, method, dim, params):
        h = hashlib.sha1(f"{self.graph.digest()}|{self.seed_for(method, params)}|{_canonical(params)}".encode())
        safe = method.replace(":", "-").replace("/", "_")
        return self.cache_dir / f"{safe}_{int(dim)}_{h.hexdigest()[:12]}.emb"

    def _load_cached(self, method, dim, params):
        """Cached matrix, or None. A recorded failure is restored into `failures`."""
        if not self.cache_dir:
            return None
        path = self.path_for(method, dim, params)
        if path.exists():
            self.disk_hits += 1
            return load_embedding(path, self.graph.node_count)
        failed = path.with_suffix(".failed")
        if failed.exists():
            self.disk_hits += 1
            self.failures[self.key(method, dim, params)] = failed.read_text(encoding="utf-8")
        return None

    def _record_failure(self, method, dim, params, err):
        msg = f"{method} d={dim} {params}: {err}"
        self.failures[self.key(method, dim, params)] = msg
        if self.cache_dir:
            self.path_for(method, dim, params).with_suffix(".failed").write_text(msg, encoding="utf-8")
        return msg

    def get(self, method, dim, params=None) -> EmbeddingMatrix:
        params = dict(params or {})
        key = self.key(method, dim, params)
        if key in self.memory:
            return self.memory[key]
        if key in self.failures:
            raise EmbeddingError(self.failures[key])
        if method in self.external:
            files = self.external[method]
            if str(dim) not in files and dim not in files:
                raise EmbeddingError(f"{method}: no external embedding file for dimension {dim}")
            emb = load_embedding(files.get(str(dim), files.get(dim)), self.graph.node_count, method_id=method)
            self.memory[key] = emb
            return emb
        emb = self._load_cached(method, dim, params)
        if key in self.failures:
            raise EmbeddingError(self.failures[key])
        if emb is None:
            emb, err = _fit_job((self.graph, method, dim, params, self.seed_for(method, params)))
            self.fits += 1
            if err:
                raise EmbeddingError(self._record_failure(method, dim, params, err))
            self._save(method, dim, params, emb)
        self.memory[key] = emb
        return emb

    def _save(self, method, dim, params, emb):
        if self.cache_dir:
            save_embedding(emb, self.path_for(method, dim, params))

    def prefetch(self, jobs_spec, jobs=1):
        """Fit every (method, dim, params) not cached yet, optionally in worker processes."""
        todo = []
        for method, dim, params in jobs_spec:
            params = dict(params)
            key = self.key(method, dim, params)
            if key in self.memory or key in self.failures or method in self.external:
                continue
            emb = self._load_cached(method, dim, params)
            if emb is not None:
                self.memory[key] = emb
            elif key not in self.failures:
                todo.append((method, dim, params))
        if not todo:
            return
        args = [(self.graph, m, d, p, self.seed_for(m, p)) for m, d, p in todo]
        if jobs > 1 and len(todo) > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                results = list(pool.map(_fit_job, args))
        else:
            results = [_fit_job(a) for a in args]
        for (m, d, p), (emb, err) in zip(todo, results):
            self.fits += 1
            if err:
                logger.warning("fit failed: %s d=%d %s: %s", m, d, p, err)
                self._record_failure(m, d, p, err)
            else:
                self._save(m, d, p, emb)
                self.memory[self.key(m, d, p)] = emb


# -- scoring ----------------------------------------------------------------


@dataclass
class ClassifierConfig:
    reg: float = 1.0
    threshold: float | None = None  # None: top-k_i with k_i the node's true label count


def _predict(model, x, y_true, clf: ClassifierConfig):
    if clf.threshold is not None:
        return predict_multilabel(model, x, threshold=clf.threshold)
    return predict_multilabel(model, x, k_per_node=np.maximum(y_true.sum(axis=1), 1))


def validation_score(embs, access: LabelAccess, clf: ClassifierConfig):
    """Train on train rows, macro-F1 on validation rows."""
    x = concat_features(embs, access.train)
    model = train_ovr(x[access.train], access.labels(access.train), clf.reg)
    yv = access.labels(access.val)
    return f1_report(_predict(model, x[access.val], yv, clf), yv).macro_f1


def test_reports(feature_sets, access: LabelAccess, clf: ClassifierConfig):
    """One test read per round: train each feature set on train rows, report test F1."""
    test_rows, yt = access.take_test()
    out = []
    for embs in feature_sets:
        x = concat_features(embs, access.train)
        model = train_ovr(x[access.train], access.labels(access.train), clf.reg)
        out.append(f1_report(_predict(model, x[test_rows], yt, clf), yt))
    return out


# -- grid search ------------------------------------------------------------


@dataclass
class MethodSpec:
    method_id: str
    grid: HyperGrid
    fixed: dict = field(default_factory=dict)

    def points(self):
        if not self.grid.axes:
            yield dict(self.fixed)
            return
        for pt in self.grid.points():
            yield {**self.fixed, **pt}

    def fit_count(self):
        return max(len(self.grid), 1) if self.grid.axes else 1


@dataclass
class MethodCandidate:
    method_id: str
    best_params: dict  # dim -> params
    val_scores: dict  # dim -> best validation macro-F1
    all_scores: dict  # dim -> list of (params, score)
    best_dimension: int
    failures: list = field(default_factory=list)

    @property
    def best_score(self):
        return self.val_scores[self.best_dimension]

    def offered_dims(self):
        return sorted(self.val_scores)


def grid_search(store: EmbeddingStore, access: LabelAccess, spec: MethodSpec, dims,
                clf: ClassifierConfig) -> MethodCandidate:
    """Best parameters per dimension by validation macro-F1 (ties keep enumeration order)."""
    best_params, val_scores, all_scores, failures = {}, {}, {}, []
    for dim in dims:
        scores = []
        for params in spec.points():
            try:
                emb = store.get(spec.method_id, dim, params)
            except EmbeddingError as exc:
                failures.append(str(exc))
                continue
            s = validation_score([emb], access, clf)
            scores.append((params, s))
            if dim not in val_scores or s > val_scores[dim]:
                best_params[dim], val_scores[dim] = params, s
        all_scores[dim] = scores
    if not val_scores:
        raise EmbeddingError(f"{spec.method_id}: every fit failed:\n  " + "\n  ".join(failures))
    # ties go to the smallest dimension
    best_dim = min(val_scores, key=lambda d: (-val_scores[d], d))
    return MethodCandidate(spec.method_id, best_params, val_scores, all_scores, best_dim, failures)


# -- greedy ensemble --------------------------------------------------------


@dataclass
class EnsembleSelection:
    accepted: list  # [(method_id, dim)]
    trajectory: list  # incumbent validation macro-F1 after each step
    trace: list  # one record per trial
    evaluations: int
    val_score: float
    test: object = None  # F1Report of the ensemble
    single_tests: dict = field(default_factory=dict)  # method_id -> F1Report at its best dimension


def sort_candidates(candidates):
    return sorted(candidates, key=lambda c: (-c.best_score, c.method_id))


def greedy_ensemble(candidates, store: EmbeddingStore, access: LabelAccess, clf: ClassifierConfig,
                    evaluate_test=True) -> EnsembleSelection:
    candidates = sort_candidates(candidates)
    if not candidates:
        raise ValueError("greedy ensemble needs at least one candidate")

    def emb(c, dim):
        return store.get(c.method_id, dim, c.best_params[dim])

    top = candidates[0]
    chosen = [(top, top.best_dimension)]
    current = validation_score([emb(top, top.best_dimension)], access, clf)
    evaluations = 1
    trajectory = [current]
    trace = [{"method": top.method_id, "dimension": top.best_dimension, "score": current, "accepted": True}]

    for cand in candidates[1:]:
        base = [emb(c, d) for c, d in chosen]
        best_dim, best = None, -np.inf
        for dim in cand.offered_dims():
            s = validation_score(base + [emb(cand, dim)], access, clf)
            evaluations += 1
            trace.append({"method": cand.method_id, "dimension": dim, "score": s, "accepted": False})
            if s > best:
                best_dim, best = dim, s
        if best > current + TIE_TOL:
            chosen.append((cand, best_dim))
            current = best
            for rec in reversed(trace):
                if rec["method"] == cand.method_id and rec["dimension"] == best_dim:
                    rec["accepted"] = True
                    break
        trajectory.append(current)

    sel = EnsembleSelection([(c.method_id, d) for c, d in chosen], trajectory, trace, evaluations, current)
    if evaluate_test:
        feature_sets = [[emb(c, d) for c, d in chosen]] + [[emb(c, c.best_dimension)] for c in candidates]
        reports = test_reports(feature_sets, access, clf)
        sel.test = reports[0]
        sel.single_tests = {c.method_id: r for c, r in zip(candidates, reports[1:])}
    return sel


def count_candidate_evaluations(selection: EnsembleSelection) -> int:
    """Ensemble trainings scored on validation; at most (k - 1) * |dims| + 1."""
    return selection.evaluations


def exhaustive_search(candidates, store, access, clf):
    """All 2^k - 1 subsets at each method's best dimension. Exponential; test-oracle use only."""
    import itertools

    candidates = sort_candidates(candidates)
    best, best_subset, evaluations = -np.inf, None, 0
    for r in range(1, len(candidates) + 1):
        for subset in itertools.combinations(candidates, r):
            embs = [store.get(c.method_id, c.best_dimension, c.best_params[c.best_dimension]) for c in subset]
            s = validation_score(embs, access, clf)
            evaluations += 1
            if s > best + TIE_TOL:
                best, best_subset = s, [c.method_id for c in subset]
    return best, best_subset, evaluations


# -- rounds -----------------------------------------------------------------


def _round_record(r, split, cands, sel, label_names):
    methods = {}
    for c in cands:
        methods[c.method_id] = {
            "val_macro_f1": {str(d): c.val_scores[d] for d in c.offered_dims()},
            "best_params": {str(d): c.best_params[d] for d in c.offered_dims()},
            "best_dimension": c.best_dimension,
            "grid_scores": {str(d): [[p, s] for p, s in c.all_scores[d]] for d in sorted(c.all_scores)},
            "failures": c.failures,
            "test": sel.single_tests[c.method_id].to_dict(),
        }
    return {
        "round": r,
        "split_seed": split.seed,
        "split_sizes": list(split.sizes()),
        "methods": methods,
        "ensemble": {
            "selection": [[m, d] for m, d in sel.accepted],
            "trace": sel.trace,
            "trajectory": sel.trajectory,
            "val_macro_f1": sel.val_score,
            "evaluations": sel.evaluations,
            "test": sel.test.to_dict(label_names),
        },
    }


def _mean_std(values):
    a = np.asarray(values, dtype=np.float64)
    return {"mean": float(a.mean()), "std": float(a.std())}


def summarize(records, label_names):
    methods = sorted(records[0]["methods"])
    summary = {"methods": {}, "ensemble": {}}
    for m in methods:
        tests = [r["methods"][m]["test"] for r in records]
        dims = [r["methods"][m]["best_dimension"] for r in records]
        summary["methods"][m] = {
            "test_macro_f1": _mean_std([t["macro_f1"] for t in tests]),
            "test_micro_f1": _mean_std([t["micro_f1"] for t in tests]),
            "val_macro_f1": _mean_std([r["methods"][m]["val_macro_f1"][str(d)] for r, d in zip(records, dims)]),
            "dimensions": dims,
            "per_class_f1_mean": np.mean([t["per_class_f1"] for t in tests], axis=0).tolist(),
        }
    ens = [r["ensemble"] for r in records]
    summary["ensemble"] = {
        "test_macro_f1": _mean_std([e["test"]["macro_f1"] for e in ens]),
        "test_micro_f1": _mean_std([e["test"]["micro_f1"] for e in ens]),
        "val_macro_f1": _mean_std([e["val_macro_f1"] for e in ens]),
        "selections": [e["selection"] for e in ens],
        "per_class_f1_mean": np.mean([e["test"]["per_class_f1"] for e in ens], axis=0).tolist(),
    }
    best = max(methods, key=lambda m: (summary["methods"][m]["test_macro_f1"]["mean"], m))
    best_mean = summary["methods"][best]["test_macro_f1"]["mean"]
    ens_mean = summary["ensemble"]["test_macro_f1"]["mean"]
    summary["best_single_method"] = best
    summary["gain_pct"] = 100.0 * (ens_mean - best_mean) / best_mean if best_mean > 0 else 0.0
    summary["labels"] = list(label_names)
    return summary


def run_rounds(graph, labels, specs, dims, rounds=5, base_seed=0, fractions=FRACTIONS,
               clf: ClassifierConfig | None = None, store: EmbeddingStore | None = None, jobs=1):
    """
    Repeat split -> grid search -> greedy ensemble `rounds` times with split
    seeds base_seed + r. Embeddings depend only on the graph, so they are fit
    once and shared by all rounds.
    """
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    clf = clf or ClassifierConfig()
    store = store or EmbeddingStore(graph, base_seed)
    dims = [int(d) for d in dims]
    store.prefetch([(s.method_id, d, p) for s in specs for d in dims for p in s.points()
                    if s.method_id not in store.external], jobs=jobs)

    nodes = labels.labelled_nodes() if hasattr(labels, "labelled_nodes") else np.arange(len(labels))
    label_names = getattr(labels, "label_names", ())
    records = []
    for r in range(rounds):
        try:
            split = split_nodes(nodes, fractions, base_seed + r)
            access = LabelAccess(labels, split)
            cands = [grid_search(store, access, s, dims, clf) for s in specs]
            sel = greedy_ensemble(cands, store, access, clf)
        except Exception as exc:
            raise RoundError(r, exc) from exc
        best_single = max(c.best_score for c in cands)
        if sel.val_score < best_single:
            raise AssertionError(f"round {r}: ensemble validation {sel.val_score} below best single {best_single}")
        logger.info("round %d: ensemble %s val %.4f test %.4f", r, sel.accepted, sel.val_score, sel.test.macro_f1)
        records.append(_round_record(r, split, cands, sel, label_names))
    logger.info("%d embedding fits, %d loaded from disk", store.fits, store.disk_hits)
    return {"rounds": records, "summary": summarize(records, label_names)}


class RoundError(RuntimeError):
    def __init__(self, round_index, cause):
        super().__init__(f"round {round_index} failed: {type(cause).__name__}: {cause}")
        self.round_index = round_index
        self.cause = cause
