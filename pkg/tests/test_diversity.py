import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import random_orthogonal
from graphensemble.diversity import (
    CorrelationReport,
    DegenerateEmbeddingError,
    correlation_matrix,
    dcor,
    dcov2,
    dcov_terms,
    double_center,
    pairwise_distances,
    rv_coefficient,
    structural_bound,
)
from graphensemble.embed import EmbeddingMatrix
from oracles import naive_dcor, naive_dcov2, naive_distances


finite = st.floats(-100, 100, allow_nan=False, allow_infinity=False)


def test_distance_345():
    d = pairwise_distances(np.array([[0.0, 0.0], [3.0, 4.0], [3.0, 4.0]]))
    assert d[0, 1] == 5.0
    assert d[1, 2] == 0.0


def test_distances_double_loop(rng):
    x = rng.standard_normal((10, 4))
    ref = np.array([[np.sqrt(sum((x[i, k] - x[j, k]) ** 2 for k in range(4))) for j in range(10)]
                    for i in range(10)])
    assert np.allclose(pairwise_distances(x), ref, atol=1e-12, rtol=0)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(2, 12), st.integers(1, 4)), elements=finite))
def test_distance_metric_axioms(x):
    d = pairwise_distances(x)
    assert np.array_equal(d, d.T)
    assert np.all(np.diag(d) == 0) and np.all(d >= 0)
    n = len(d)
    scale = 1e-9 * max(1.0, d.max())
    for k in range(n):
        assert np.all(d <= d[:, [k]] + d[[k], :] + scale)


def test_double_center_constant_and_2x2():
    assert np.allclose(double_center(np.full((4, 4), 3.0)), 0.0)
    c = 2.0
    a = np.array([[0.0, c], [c, 0.0]])
    # direct formula: row means c/2, col means c/2, grand mean c/2
    want = np.array([[0 - c / 2 - c / 2 + c / 2, c - c / 2 - c / 2 + c / 2],
                     [c - c / 2 - c / 2 + c / 2, 0 - c / 2 - c / 2 + c / 2]])
    assert np.allclose(double_center(a), want)


def test_double_center_sums_vanish(rng):
    m = rng.random((20, 20))
    m = m + m.T
    c = double_center(m)
    tol = 1e-9 * 20 * np.abs(m).max()
    assert np.all(np.abs(c.sum(axis=0)) < tol) and np.all(np.abs(c.sum(axis=1)) < tol)


def test_dcov2_identical_rows_zero():
    x = np.ones((6, 3))
    assert dcov2(x, x) == 0.0


def test_dcov2_fixed_6x2_oracle():
    x = np.array([[0.1, 2.0], [1.5, -0.3], [2.2, 0.7], [-1.0, 1.1], [0.4, 0.4], [3.0, -2.0]])
    y = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 2.0], [2.5, 2.5], [0.3, -0.7], [1.1, 1.9]])
    assert dcov2(x, y) == pytest.approx(naive_dcov2(x, y), abs=1e-10)
    assert dcov2(x, y) == pytest.approx(dcov2(y, x), abs=1e-12)


def test_dcov2_row_mismatch():
    with pytest.raises(ValueError, match="row count"):
        dcov2(np.zeros((3, 2)), np.zeros((4, 2)))


def test_dcor_self_is_one(rng):
    x = rng.standard_normal((30, 5))
    assert dcor(x, x) == pytest.approx(1.0, abs=1e-12)


def test_dcor_independent_small(rng):
    x = rng.standard_normal((200, 8))
    y = rng.standard_normal((200, 8))
    got = dcor(x, y)
    assert got == pytest.approx(naive_dcor(x, y), abs=1e-10)
    # the biased V-statistic sits near 0.36 for independent 200x8 normals
    # (max 0.389 over 200 seeds); a dependent pair lands far above that
    assert got < 0.40
    assert dcor(x, x + 0.5 * y) > 0.6


def test_dcor_degenerate():
    with pytest.raises(DegenerateEmbeddingError, match="undefined distance correlation"):
        dcor(np.ones((5, 2)), np.arange(10.0).reshape(5, 2))


def test_streaming_matches_dense(rng):
    x = rng.standard_normal((300, 4))
    y = x[:, :2] ** 2 + 0.1 * rng.standard_normal((300, 2))
    dense = dcov_terms(x, y, streaming=False)
    blocked = dcov_terms(x, y, streaming=True)
    assert np.allclose(dense, blocked, rtol=1e-12, atol=1e-12)
    assert dcor(x, y, streaming=True) == pytest.approx(naive_dcor(x, y), abs=1e-10)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_dcor_similarity_invariance(seed):
    rng = np.random.default_rng(seed)
    n, d = rng.integers(3, 40), rng.integers(1, 6)
    x = rng.standard_normal((n, d))
    y = rng.standard_normal((n, rng.integers(1, 6)))
    a = rng.choice([-1, 1]) * rng.uniform(0.1, 10)
    z = a * x @ random_orthogonal(rng, d) + rng.standard_normal(d) * 10
    assert dcor(x, z) == pytest.approx(1.0, abs=1e-8)
    assert dcor(z, y) == pytest.approx(dcor(x, y), abs=1e-8)
    v = dcor(x, y)
    assert -1e-9 <= v <= 1 + 1e-9
    assert v == pytest.approx(dcor(y, x), abs=1e-12)


def test_rv_identities(rng):
    x = rng.standard_normal((20, 3))
    assert rv_coefficient(x, x) == pytest.approx(1.0)
    assert rv_coefficient(x, x @ random_orthogonal(rng, 3)) == pytest.approx(1.0)


def test_rv_fixed_oracle():
    x = np.array([[1.0, 2.0], [0.0, 1.0], [3.0, -1.0], [2.0, 2.0], [-1.0, 0.5]])
    y = np.array([[0.5, 1.0, 0.0], [1.0, -1.0, 2.0], [0.0, 0.0, 1.0], [2.0, 1.0, 1.0], [1.0, 3.0, -2.0]])
    xc, yc = x - x.mean(0), y - y.mean(0)
    gx, gy = xc @ xc.T, yc @ yc.T
    want = np.sum(gx * gy) / (np.linalg.norm(gx) * np.linalg.norm(gy))
    assert rv_coefficient(x, y) == pytest.approx(want, abs=1e-12)


def test_rv_zero_matrix():
    with pytest.raises(DegenerateEmbeddingError):
        rv_coefficient(np.ones((4, 2)), np.eye(4))


def test_correlation_matrix_shapes_and_csv(tmp_path, rng):
    x = EmbeddingMatrix(rng.standard_normal((25, 4)), "a", {}, 0)
    assert correlation_matrix([x]).dcor.tolist() == [[1.0]]
    dup = correlation_matrix([x, x])
    assert np.allclose(dup.dcor, 1.0)
    embs = [EmbeddingMatrix(rng.standard_normal((25, d)), f"m{d}", {}, 0) for d in (2, 3, 4, 5)]
    rep = correlation_matrix(embs, "both")
    assert np.array_equal(rep.dcor, rep.dcor.T) and np.array_equal(rep.rv, rep.rv.T)
    assert np.allclose(np.diag(rep.dcor), 1.0)
    for i in range(4):
        for j in range(4):
            assert rep.dcor[i, j] == pytest.approx(naive_dcor(embs[i].values, embs[j].values), abs=1e-10)
    rep.to_csv(tmp_path / "d.csv")
    ids, m = CorrelationReport.read_csv(tmp_path / "d.csv")
    assert ids == ("m2", "m3", "m4", "m5")
    assert np.allclose(m, rep.dcor, atol=5e-7)


def test_correlation_matrix_names_degenerate_method(rng):
    good = EmbeddingMatrix(rng.standard_normal((10, 2)), "good", {}, 0)
    bad = EmbeddingMatrix(np.zeros((10, 2)), "flat", {}, 0)
    with pytest.raises(DegenerateEmbeddingError, match="flat"):
        correlation_matrix([good, bad])


def test_structural_bound_reports_values(rng):
    x = rng.standard_normal((12, 2))
    out = structural_bound(x, x[:, ::-1], [[0, 1], [2, 3, 4]])
    assert out["bound"] == pytest.approx(1 - 5 / 12)
    assert out["dcor"] == pytest.approx(1.0)


def test_naive_distance_helper_agrees(rng):
    x = rng.standard_normal((7, 3))
    assert np.allclose(naive_distances(x), pairwise_distances(x), atol=1e-12)
