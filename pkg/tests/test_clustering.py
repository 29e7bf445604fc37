import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import toy
from levelblend.clustering import (
    alpha,
    categorize,
    distortion_curve,
    estimate_k,
    estimate_k_medoids,
    kmeans,
    kmedoids,
    select_k,
)
from levelblend.corpus import Level, segment_chunks
from levelblend.errors import ClusteringError

TRIANGLE = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, math.sqrt(3) / 2]])


def three_blobs(seed):
    rng = np.random.default_rng(seed)
    return np.vstack([c + rng.normal(0, 0.05, size=(50, 2)) for c in TRIANGLE])


def one_blob(seed):
    return np.random.default_rng(seed).normal(0, 1, size=(150, 2))


def test_kmeans_identical_points():
    a = kmeans([[1.0, 2.0], [1.0, 2.0]], 1)
    assert a.labels == (0, 0) and a.inertia == 0


def test_kmeans_separates_blobs():
    a = kmeans([[0, 0], [0, 1], [10, 0], [10, 1]], 2, seed=5)
    assert a.labels[0] == a.labels[1] != a.labels[2] == a.labels[3]
    assert a.inertia == pytest.approx(1.0)


def test_kmeans_deterministic():
    x = three_blobs(1)
    assert kmeans(x, 3, seed=9).labels == kmeans(x, 3, seed=9).labels


def test_kmeans_errors():
    with pytest.raises(ClusteringError):
        kmeans([[0.0], [1.0]], 3)
    with pytest.raises(ClusteringError):
        kmeans(np.zeros((0, 2)), 1)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.floats(-50, 50), st.floats(-50, 50)), min_size=3, max_size=30), st.integers(1, 3), st.integers(0, 99))
def test_kmeans_inertia_non_increasing(points, k, seed):
    a = kmeans(points, min(k, len(points)), seed)
    h = a.history
    assert all(h[i + 1] <= h[i] + 1e-9 * max(1.0, h[i]) for i in range(len(h) - 1))
    assert set(a.labels) <= set(range(a.k)) and len(a.labels) == len(points)


def test_alpha_recurrence():
    assert alpha(2, 2) == pytest.approx(1 - 3 / 8)
    a3 = alpha(2, 2) + (1 - alpha(2, 2)) / 6
    assert alpha(3, 2) == pytest.approx(a3)
    assert alpha(4, 2) == pytest.approx(a3 + (1 - a3) / 6)


def test_distortion_curve_definition():
    curve = distortion_curve({1: 10.0, 2: 2.0, 3: 0.0, 4: 0.0}, dim=2)
    assert curve.f_values[1] == 1.0
    assert curve.f_values[2] == pytest.approx(2.0 / (alpha(2, 2) * 10.0))
    assert curve.f_values[4] == 1.0  # S_3 = 0
    assert select_k(curve) == 3


def test_select_k_no_acceptable_value():
    assert select_k(distortion_curve({1: 1.0, 2: 0.9, 3: 0.85}, dim=2)) == 1


def test_estimate_k_identical_points():
    k, curve = estimate_k(np.ones((20, 3)), 5)
    assert k == 1 and all(v == 1.0 for v in curve.f_values.values())


def test_estimate_k_rejects_bad_kmax():
    with pytest.raises(ClusteringError):
        estimate_k(np.zeros((3, 2)), 0)


@pytest.mark.parametrize("seed", range(3))
def test_estimate_k_blobs(seed):
    assert estimate_k(three_blobs(seed), 8, seed)[0] == 3
    assert estimate_k(one_blob(seed), 8, seed)[0] == 1


def _two_groups():
    pts = np.array([[0.0], [0.1], [0.2], [10.0], [10.1]])
    return np.abs(pts - pts.T)


def test_kmedoids_two_groups():
    a = kmedoids(5, _two_groups(), 2, seed=3)
    assert a.labels[:3] == (a.labels[0],) * 3 and a.labels[3] == a.labels[4] != a.labels[0]


def test_kmedoids_k_equals_n():
    a = kmedoids(5, _two_groups(), 5)
    assert sorted(a.medoids) == list(range(5)) and a.inertia == 0


def test_kmedoids_callable_and_deterministic():
    d = _two_groups()
    a = kmedoids(5, lambda i, j: d[i, j], 2, seed=1)
    b = kmedoids(5, d, 2, seed=1)
    assert a.labels == b.labels and a.medoids == b.medoids


def test_kmedoids_errors():
    d = _two_groups()
    d[0, 1] += 1
    with pytest.raises(ClusteringError, match="symmetric"):
        kmedoids(5, d, 2)
    with pytest.raises(ClusteringError):
        kmedoids(5, _two_groups(), 6)
    with pytest.raises(ClusteringError, match="symmetric"):
        kmedoids(3, lambda i, j: float(i), 1)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-100, 100), min_size=2, max_size=25), st.integers(1, 4), st.integers(0, 50))
def test_kmedoids_cost_never_increases(xs, k, seed):
    pts = np.array(xs)[:, None]
    a = kmedoids(len(xs), np.abs(pts - pts.T), min(k, len(xs)), seed)
    assert all(b <= a_ for a_, b in zip(a.history, a.history[1:]))


def test_estimate_k_medoids_groups():
    pts = np.concatenate([np.linspace(0, 0.1, 10), np.linspace(5, 5.1, 10)])[:, None]
    assert estimate_k_medoids(np.abs(pts - pts.T), 6)[0] == 2


def _chunks(grids):
    return [segment_chunks(Level(f"c{i}", g), 16, 16)[0] for i, g in enumerate(grids)]


def test_categorize_disjoint_types(legend):
    rng = np.random.default_rng(0)
    ground_only = []
    for _ in range(6):
        g = np.zeros((14, 16), dtype=np.int32)
        g[12:, :] = toy.GROUND
        g[12:, int(rng.integers(3, 12))] = 0
        ground_only.append(g)
    pipes = []
    for _ in range(6):
        g = np.zeros((14, 16), dtype=np.int32)
        g[3:, 2:4] = toy.PIPE_BODY
        g[3:, 8:10] = toy.PIPE_BODY
        g[2, int(rng.integers(2, 4))] = toy.PIPE_TOP
        pipes.append(g)
    cat = categorize(_chunks(ground_only + pipes), legend, seed=0)
    groups = sorted(sorted(c.indices) for c in cat.categories)
    assert groups == [list(range(6)), list(range(6, 12))]


def test_categorize_homogeneous(legend):
    g = np.zeros((14, 16), dtype=np.int32)
    g[12:, :] = toy.GROUND
    cat = categorize(_chunks([g] * 5), legend)
    assert [c.id for c in cat.categories] == ["0"] and not cat.reclustered


def test_categorize_infinite_threshold_is_plain_kmeans(levels, legend):
    chunks = [c for lv in levels for c in segment_chunks(lv)]
    cat = categorize(chunks, legend, seed=2, recluster_threshold=math.inf)
    plain = kmeans(np.array([__import__("levelblend").corpus.chunk_features(c, legend) for c in chunks]), cat.k, 2)
    assert sorted(sorted(c.indices) for c in cat.categories) == sorted(
        plain.members(c) for c in range(plain.k) if plain.members(c)
    )


def test_categorize_needs_two_chunks(legend, levels):
    with pytest.raises(ClusteringError):
        categorize(segment_chunks(levels[0])[:1], legend)


def test_reclustering_ids(legend):
    rng = np.random.default_rng(2)
    grids = []
    for kind in [0] * 8 + [1] * 8 + [2] * 8:
        g = np.zeros((14, 16), dtype=np.int32)
        if kind < 2:
            g[12 - kind:, :] = toy.GROUND
        else:
            g[:, :] = toy.WATER
        g[3, : int(rng.integers(0, 6))] = toy.COIN
        grids.append(g)
    plain = categorize(_chunks(grids), legend, seed=0)
    assert not plain.reclustered
    cat = categorize(_chunks(grids), legend, seed=0, recluster_threshold=0.05)
    assert list(cat.reclustered) == ["1"]
    ids = sorted(c.id for c in cat.categories)
    assert ids[0] == "0" and all(i.startswith("1-") and i[2:].isdigit() for i in ids[1:])
    assert sorted(i for c in cat.categories for i in c.indices) == list(range(24))


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.5, 3.0))
def test_categorize_partitions(seed, threshold):
    legend = toy.legend()
    chunks = [c for lv in toy.toy_levels(seed=seed, n_levels=2) for c in segment_chunks(lv)]
    cat = categorize(chunks, legend, seed=seed, recluster_threshold=threshold)
    idx = sorted(i for c in cat.categories for i in c.indices)
    assert idx == list(range(len(chunks)))
    assert all(c.chunks for c in cat.categories)
