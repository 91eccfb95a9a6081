"""
End-to-end acceptance checks, one test per criterion. Each test records a
one-line PASS/FAIL verdict that is printed at the end of the pytest run.

Criterion 7 needs the Citeseer network, which is not shipped. Point
GRAPHENSEMBLE_CITESEER at a directory holding `citeseer.edges` and
`citeseer.labels` (formats of `graphensemble.graph`) to run it.
"""

import json
import os
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import random_orthogonal
from graphensemble.classify import concat_features, train_ovr
from graphensemble.cli import main
from graphensemble.config import build_synthetic
from graphensemble.diversity import dcor, dcov2
from graphensemble.embed import HyperGrid, default_grid
from graphensemble.embed.gf import gf_gradient, gf_objective
from graphensemble.embed.hope import similarity_matrix
from graphensemble.embed.lap import embed_lap, laplacian_spectrum
from graphensemble.embed.node2vec import transition_counts
from graphensemble.ensemble import (
    ClassifierConfig,
    EmbeddingStore,
    LabelAccess,
    MethodSpec,
    count_candidate_evaluations,
    exhaustive_search,
    greedy_ensemble,
    grid_search,
    run_rounds,
    split_nodes,
)
from graphensemble.graph import Graph, largest_wcc, load_edge_list, load_labels
from oracles import first_order_transitions, naive_dcor, naive_dcov2

VERDICTS = {}
DIMS = [32, 64, 128]


def record(n, ok, detail):
    VERDICTS[n] = (bool(ok), detail)
    assert ok, f"criterion {n}: {detail}"


# ---------------------------------------------------------------- 1

def test_criterion_1_dcor_matches_definition():
    rng = np.random.default_rng(101)
    worst = 0.0
    t0 = time.perf_counter()
    for _ in range(50):
        n = int(rng.integers(2, 301))
        x = rng.standard_normal((n, rng.integers(1, 17))) * rng.uniform(0.1, 10)
        y = rng.standard_normal((n, rng.integers(1, 17))) + 0.5 * x[:, :1]
        got = (dcov2(x, y), dcor(x, y))
        worst = max(worst, abs(got[0] - naive_dcov2(x, y)), abs(got[1] - naive_dcor(x, y)))
    elapsed = time.perf_counter() - t0
    record(1, worst <= 1e-10 and elapsed < 10,
           f"max |optimized - naive| = {worst:.2e} over 50 pairs (tol 1e-10), {elapsed:.1f} s incl. oracle")


# ---------------------------------------------------------------- 2

def test_criterion_2_dcor_invariance():
    rng = np.random.default_rng(202)
    worst_inv = worst_sym = 0.0
    in_range = True
    for _ in range(20):
        n, d = int(rng.integers(5, 200)), int(rng.integers(1, 17))
        x = rng.standard_normal((n, d))
        a = rng.choice([-1.0, 1.0]) * rng.uniform(0.01, 100)
        z = a * x @ random_orthogonal(rng, d) + rng.uniform(-50, 50, d)
        worst_inv = max(worst_inv, abs(dcor(x, z) - 1.0))
        y = rng.standard_normal((n, int(rng.integers(1, 17))))
        v, w = dcor(x, y), dcor(y, x)
        worst_sym = max(worst_sym, abs(v - w))
        in_range &= -1e-9 <= v <= 1 + 1e-9
    record(2, worst_inv <= 1e-8 and worst_sym <= 1e-12 and in_range,
           f"max |dCor(X, aXQ+b) - 1| = {worst_inv:.1e} (tol 1e-8), asymmetry {worst_sym:.1e}, in [0,1]: {in_range}")


# ---------------------------------------------------------------- 3

def test_criterion_3_concatenation_objective():
    rng = np.random.default_rng(303)
    t0 = time.perf_counter()
    worst = -np.inf
    for _ in range(10):
        n = int(rng.integers(30, 120))
        xa = rng.standard_normal((n, rng.integers(2, 10)))
        xb = rng.standard_normal((n, rng.integers(2, 10)))
        y = (xa[:, :2] @ rng.standard_normal((2, 3)) + xb[:, :2] @ rng.standard_normal((2, 3))
             + rng.standard_normal((n, 3)) > 0).astype(int)
        y[0], y[1] = 1, 0
        oa = train_ovr(concat_features([xa]), y).objectives
        ob = train_ovr(concat_features([xb]), y).objectives
        m = train_ovr(concat_features([xa, xb]), y)
        assert m.converged.all()
        worst = max(worst, float(np.max(m.objectives - np.minimum(oa, ob))))
    elapsed = time.perf_counter() - t0
    record(3, worst <= 1e-6 and elapsed < 30,
           f"max(obj_concat - min(obj_X, obj_Y)) = {worst:.3g} (must be <= 1e-6), {elapsed:.1f} s")


# ---------------------------------------------------------------- 4 and 5

def light_specs():
    return [
        MethodSpec("gf", HyperGrid("gf", {"lr": [0.01, 0.1], "reg": [1.0]})),
        MethodSpec("lap", HyperGrid("lap", {})),
        MethodSpec("hope", HyperGrid("hope", {"beta": [0.01], "similarity": ["katz", "common_neighbors"]})),
        MethodSpec("node2vec", HyperGrid("node2vec", {"p": [1], "q": [1]}),
                   {"walk_len": 20, "walks_per_node": 5, "epochs": 1}),
    ]


@pytest.fixture(scope="module")
def twenty_runs():
    out = []
    for seed in range(20):
        g, labels = build_synthetic({}, seed)
        which = "degree" if seed % 2 == 0 else "closeness"
        res = run_rounds(g, labels[which], light_specs(), DIMS, rounds=1, base_seed=seed)
        out.append(res["rounds"][0])
    return out


@pytest.mark.slow
def test_criterion_4_greedy_non_degradation(twenty_runs):
    margins = []
    for r in twenty_runs:
        best = max(max(m["val_macro_f1"].values()) for m in r["methods"].values())
        margins.append(r["ensemble"]["val_macro_f1"] - best)
    record(4, min(margins) >= 0,
           f"ensemble val - best single val over 20 seeded runs: min {min(margins):+.4f}, "
           f"mean {np.mean(margins):+.4f}")


@pytest.mark.slow
def test_criterion_5_greedy_cost_bound(twenty_runs):
    k, bound = 4, (4 - 1) * len(DIMS) + 1
    counts = [r["ensemble"]["evaluations"] for r in twenty_runs]
    # exhaustive oracle on the first run's graph and split
    g, labels = build_synthetic({}, 0)
    store = EmbeddingStore(g, 0)
    access = LabelAccess(labels["degree"], split_nodes(labels["degree"].labelled_nodes(), seed=0))
    clf = ClassifierConfig()
    cands = [grid_search(store, access, s, DIMS, clf) for s in light_specs()]
    sel = greedy_ensemble(cands, store, access, clf, evaluate_test=False)
    best, _, exhaustive = exhaustive_search(cands, store, access, clf)
    ok = max(counts) <= bound and count_candidate_evaluations(sel) <= bound and exhaustive == 2**k - 1
    record(5, ok, f"greedy evaluations max {max(counts)} (bound {bound}) vs exhaustive {exhaustive}; "
                  f"greedy val {sel.val_score:.4f} vs exhaustive {best:.4f} (gap reported, not asserted)")


# ---------------------------------------------------------------- 6

def synthetic_specs():
    """Full grids, except node2vec: q in {0.25, 1, 4} at p = 1 to fit the runtime budget on one core."""
    return [
        MethodSpec("gf", default_grid("gf")),
        MethodSpec("lap", default_grid("lap")),
        MethodSpec("hope", default_grid("hope")),
        MethodSpec("node2vec", HyperGrid("node2vec", {"p": [1], "q": [0.25, 1, 4]})),
    ]


@pytest.mark.slow
def test_criterion_6_synthetic_direction():
    t0 = time.perf_counter()
    rows = []
    for seed in range(5):
        g, labels = build_synthetic({}, seed)
        store = EmbeddingStore(g, seed)
        out = {}
        for which in ("degree", "closeness"):
            s = run_rounds(g, labels[which], synthetic_specs(), DIMS, rounds=5, base_seed=seed,
                           store=store)["summary"]
            best = s["methods"][s["best_single_method"]]["test_macro_f1"]["mean"]
            out[which] = (s["ensemble"]["test_macro_f1"]["mean"], best, s["best_single_method"])
        rows.append(out)
    elapsed = time.perf_counter() - t0
    degree_ok = all(r["degree"][0] >= r["degree"][1] - 0.005 for r in rows)
    wins = sum(r["closeness"][0] > r["closeness"][1] for r in rows)
    detail = "; ".join(
        f"seed {i}: degree {r['degree'][0]:.3f} vs {r['degree'][2]} {r['degree'][1]:.3f}, "
        f"closeness {r['closeness'][0]:.3f} vs {r['closeness'][2]} {r['closeness'][1]:.3f}"
        for i, r in enumerate(rows))
    record(6, degree_ok and wins >= 4 and elapsed < 600,
           f"degree within 0.005 on all seeds: {degree_ok}; closeness wins {wins}/5; {elapsed:.0f} s. {detail}")


# ---------------------------------------------------------------- 7

@pytest.mark.slow
def test_criterion_7_citeseer():
    root = os.environ.get("GRAPHENSEMBLE_CITESEER")
    if not root or not (Path(root) / "citeseer.edges").exists():
        record(7, False, "Citeseer data not available (set GRAPHENSEMBLE_CITESEER); criterion not verified")
    root = Path(root)
    g, node_map = load_edge_list(root / "citeseer.edges")
    labels = load_labels(root / "citeseer.labels", node_map, g.node_count)
    g, old = largest_wcc(g)
    labels = labels.subset(old)
    specs = [MethodSpec(m, default_grid(m)) for m in ("gf", "lap", "hope", "node2vec")]
    t0 = time.perf_counter()
    s = run_rounds(g, labels, specs, DIMS, rounds=5, base_seed=0, jobs=os.cpu_count() or 1)["summary"]
    elapsed = time.perf_counter() - t0
    n2v = s["methods"]["node2vec"]["test_macro_f1"]["mean"]
    best = s["methods"][s["best_single_method"]]["test_macro_f1"]["mean"]
    ens = s["ensemble"]["test_macro_f1"]["mean"]
    record(7, n2v >= 0.55 and ens >= best - 0.01 and elapsed < 7200,
           f"node2vec {n2v:.3f} (>= 0.55), ensemble {ens:.3f} vs best {best:.3f} "
           f"(gain {s['gain_pct']:.1f}%), {elapsed:.0f} s")


# ---------------------------------------------------------------- 8

def test_criterion_8_f1_oracle():
    from graphensemble.classify import f1_report
    from oracles import confusion_f1

    rng = np.random.default_rng(808)
    mismatches = 0
    for _ in range(100):
        n, L = int(rng.integers(1, 60)), int(rng.integers(1, 10))
        pred = (rng.random((n, L)) < rng.random()).astype(int)
        truth = (rng.random((n, L)) < rng.random()).astype(int)
        r = f1_report(pred, truth)
        macro, micro, per = confusion_f1(pred, truth)
        mismatches += not (r.macro_f1 == macro and r.micro_f1 == micro and r.per_class_f1.tolist() == per)
    record(8, mismatches == 0, f"{mismatches} of 100 random pairs differ from the confusion-count oracle (exact)")


# ---------------------------------------------------------------- 9

def test_criterion_9_embedding_sanity():
    rng = np.random.default_rng(909)
    # GF gradient vs central differences
    g = Graph.from_edges(12, [tuple(e) for e in rng.integers(12, size=(30, 2))], weights=rng.uniform(0.5, 2, 30))
    worst_fd = 0.0
    for _ in range(10):
        x = rng.standard_normal((12, 3))
        grad = gf_gradient(x, g.src, g.dst, g.weight, 0.5)
        fd = np.zeros_like(x)
        for idx in np.ndindex(x.shape):
            e = np.zeros_like(x)
            e[idx] = 1e-6
            fd[idx] = (gf_objective(x + e, g.src, g.dst, g.weight, 0.5)
                       - gf_objective(x - e, g.src, g.dst, g.weight, 0.5)) / 2e-6
        worst_fd = max(worst_fd, np.linalg.norm(fd - grad) / np.linalg.norm(grad))
    # Katz Neumann identity on n <= 50
    worst_katz = 0.0
    for seed in range(5):
        r = np.random.default_rng(seed)
        n = int(r.integers(5, 51))
        h = Graph.from_edges(n, np.argwhere(r.random((n, n)) < 0.1), directed=bool(seed % 2))
        a = h.adjacency().toarray()
        s = similarity_matrix(h, "katz", 0.02)
        worst_katz = max(worst_katz, np.abs(s - (0.02 * a + 0.02 * a @ s)).max())
    # node2vec p = q = 1 transitions
    t = Graph.from_edges(4, [(0, 1), (1, 2), (1, 3), (2, 3), (0, 3)], weights=[1.0, 2.0, 3.0, 1.0, 0.5])
    trans = first_order_transitions(t.adjacency().toarray())
    worst_walk = 0.0
    for prev, cur in [(0, 1), (2, 1), (1, 3), (3, 2)]:
        c = transition_counts(t, prev, cur, 1.0, 1.0, steps=100_000, seed=prev * 4 + cur)
        worst_walk = max(worst_walk, np.abs(c / c.sum() - trans[cur]).max())
    # LAP drops the constant eigenvector
    ring = Graph.from_edges(20, [(i, (i + 1) % 20) for i in range(20)] + [(0, 10)])
    lam, y = laplacian_spectrum(ring, 4)
    emb = embed_lap(ring, 3).values
    deg = ring.undirected_degree()
    lap_ok = abs(lam[0]) < 1e-10 and np.ptp(y[:, 0]) < 1e-8 and np.allclose(deg @ emb, 0, atol=1e-10)
    ok = worst_fd <= 1e-5 and worst_katz <= 1e-8 and worst_walk <= 0.01 and lap_ok
    record(9, ok, f"GF FD rel err {worst_fd:.1e} (1e-5); Katz identity {worst_katz:.1e} (1e-8); "
                  f"node2vec transition gap {worst_walk:.4f} (0.01); LAP constant vector dropped: {lap_ok}")


# ---------------------------------------------------------------- 10

def test_criterion_10_determinism(tmp_path, capsys):
    cfg = {
        "synthetic": {"graphs": [{"kind": "barabasi_albert", "n": 60}, {"kind": "stochastic_block_model",
                                                                        "n": 60, "params": {"sizes": [30, 30]}}],
                      "labels": "closeness", "bins": 4},
        "methods": {
            "gf": {"grid": {"lr": [0.01, 0.1], "reg": [1.0]}, "params": {"epochs": 30}},
            "lap": {},
            "hope": {"grid": {"beta": [0.01], "similarity": ["katz", "ppr"]}},
            "node2vec": {"grid": {"p": [1], "q": [0.5, 2]},
                         "params": {"walk_len": 20, "walks_per_node": 4, "epochs": 1}},
        },
        "dims": [8, 16], "rounds": 2, "seed": 42,
    }
    outputs = []
    for name in ("first", "second"):
        path = tmp_path / f"{name}.json"
        path.write_text(json.dumps({**cfg, "out": name}))
        assert main(["ensemble", "--config", str(path), "--jobs", "1"]) == 0
        outputs.append((tmp_path / name / "results.json").read_bytes())
    capsys.readouterr()
    record(10, outputs[0] == outputs[1],
           f"two --jobs 1 runs: results JSON byte-identical ({len(outputs[0])} bytes each): {outputs[0] == outputs[1]}")
