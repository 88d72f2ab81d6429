import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.distance import cdist

from clusterjudge.density import (
    DBCV_SENTINEL,
    ClusteringConfig,
    ClusterProposal,
    canonical_labels,
    core_distances,
    dbcv_score,
    grid_search_clustering,
    mutual_reachability,
    prim_mst,
    resolve_grid,
    run_hdbscan,
)
from clusterjudge.errors import ArgumentError, NoValidClusteringError, UndefinedScoreError, ValidationError
from clusterjudge.evaluate import adjusted_rand_index
from clusterjudge.vectorize import ReducedEmbedding

from conftest import make_blobs

TWO_BLOBS = np.array([0.0, 0.1, 0.2, 0.3, 0.4, 10.0, 10.1, 10.2, 10.3, 10.4])[:, None]


# -- MST -------------------------------------------------------------------------

def brute_force_mst_weight(w):
    n = len(w)
    all_edges = [(i, j) for i in range(n) for j in range(i + 1, n)]
    best = math.inf
    for subset in itertools.combinations(all_edges, n - 1):
        parent = list(range(n))

        def find(x):
            while parent[x] != x:
                x = parent[x]
            return x

        ok = True
        for i, j in subset:
            ri, rj = find(i), find(j)
            if ri == rj:
                ok = False
                break
            parent[ri] = rj
        if ok:
            best = min(best, sum(w[i][j] for i, j in subset))
    return best


def test_prim_matches_exhaustive_enumeration():
    rng = np.random.default_rng(0)
    for _ in range(30):
        n = int(rng.integers(2, 7))
        x = rng.normal(size=(n, 2))
        if rng.random() < 0.3:
            x = np.round(x)  # force equal weights now and then
        w = cdist(x, x)
        edges = prim_mst(w)
        assert len(edges) == n - 1
        assert sum(e[2] for e in edges) == pytest.approx(brute_force_mst_weight(w), abs=1e-12)


def test_core_distance_counts_the_point_itself():
    dist = cdist(TWO_BLOBS, TWO_BLOBS)
    core = core_distances(dist, 2)
    assert core[0] == pytest.approx(0.1)  # nearest other point
    assert core_distances(dist, 1)[0] == 0.0
    mr = mutual_reachability(dist, core)
    assert mr[0, 5] == pytest.approx(10.0)
    assert mr[0, 1] == pytest.approx(0.1)


# -- HDBSCAN ---------------------------------------------------------------------------

def test_two_1d_blobs_against_single_linkage_oracle():
    # brute force: mutual reachability with k=2, then the widest single-linkage gap
    n = len(TWO_BLOBS)
    d = [[abs(TWO_BLOBS[i, 0] - TWO_BLOBS[j, 0]) for j in range(n)] for i in range(n)]
    core = [sorted(row)[1] for row in d]
    mr = [[max(core[i], core[j], d[i][j]) if i != j else 0.0 for j in range(n)] for i in range(n)]
    # single-linkage split at the largest MST edge = components of the graph of smaller edges
    cut = max(e[2] for e in prim_mst(np.array(mr)))
    comp = list(range(n))
    for i in range(n):
        for j in range(n):
            if i != j and mr[i][j] < cut:
                a, b = comp[i], comp[j]
                comp = [a if c == b else c for c in comp]
    expected = canonical_labels(comp)

    p = run_hdbscan(ReducedEmbedding(np.hstack([TWO_BLOBS, np.zeros((n, 1))]), "svd"),
                    ClusteringConfig(min_cluster_size=3, min_samples=2))
    assert p.cluster_count == 2
    assert np.sum(p.labels == -1) == 0
    assert p.labels.tolist() == expected.tolist() == [0] * 5 + [1] * 5


def test_identical_points_form_one_cluster():
    p = run_hdbscan(np.ones((8, 3)), ClusteringConfig(min_cluster_size=3, min_samples=2))
    assert p.labels.tolist() == [0] * 8


def test_run_hdbscan_preconditions():
    with pytest.raises(ArgumentError):
        run_hdbscan(TWO_BLOBS, ClusteringConfig(min_cluster_size=11, min_samples=2))
    bad = TWO_BLOBS.copy()
    bad[3, 0] = np.nan
    with pytest.raises(ValidationError):
        run_hdbscan(bad, ClusteringConfig(min_cluster_size=3))
    with pytest.raises(ArgumentError):
        ClusteringConfig(min_cluster_size=1)
    with pytest.raises(ArgumentError):
        ClusteringConfig(min_samples=0)


def test_blobs_recovered(blobs):
    pts, truth = blobs
    p = run_hdbscan(pts, ClusteringConfig(min_cluster_size=10, min_samples=5))
    assert p.cluster_count == 3
    assert adjusted_rand_index(p.labels, truth) == pytest.approx(1.0)


def test_agrees_with_sklearn_hdbscan():
    cluster = pytest.importorskip("sklearn.cluster")
    if not hasattr(cluster, "HDBSCAN"):
        pytest.skip("scikit-learn without HDBSCAN")
    rng = np.random.default_rng(4)
    pts = np.vstack([rng.normal(c, s, size=(40, 2)) for c, s in [((0, 0), 0.3), ((4, 0), 0.5), ((0, 5), 0.2)]]
                    + [rng.uniform(-3, 7, size=(15, 2))])
    for mcs, ms in [(5, 3), (10, 5), (15, 2)]:
        ours = run_hdbscan(pts, ClusteringConfig(min_cluster_size=mcs, min_samples=ms)).labels
        ref = cluster.HDBSCAN(min_cluster_size=mcs, min_samples=ms).fit(pts).labels_
        assert adjusted_rand_index(ours, ref) > 0.95


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 8), st.integers(1, 5))
def test_clusters_respect_min_cluster_size(seed, mcs, ms):
    rng = np.random.default_rng(seed)
    pts = rng.normal(size=(30, 2)) + rng.integers(0, 3, size=(30, 1)) * 3
    p = run_hdbscan(pts, ClusteringConfig(min_cluster_size=mcs, min_samples=ms))
    sizes = np.bincount(p.labels[p.labels >= 0]) if p.cluster_count else []
    assert all(s >= mcs for s in sizes)
    # ids are contiguous from 0
    assert sorted(set(p.labels.tolist()) - {-1}) == list(range(p.cluster_count))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_permutation_equivariance(seed):
    rng = np.random.default_rng(seed)
    pts = rng.normal(size=(25, 2)) + rng.integers(0, 3, size=(25, 1)) * 4
    cfg = ClusteringConfig(min_cluster_size=4, min_samples=3)
    base = run_hdbscan(pts, cfg).labels
    perm = rng.permutation(len(pts))
    permuted = run_hdbscan(pts[perm], cfg).labels
    assert canonical_labels(base[perm]).tolist() == permuted.tolist()


def test_canonical_labels():
    assert canonical_labels([5, 5, -1, 2, 5, 2]).tolist() == [0, 0, -1, 1, 0, 1]


def test_proposal_round_trip():
    p = ClusterProposal(np.array([0, 0, -1, 1]), ClusteringConfig(5, 3), 0.25)
    q = ClusterProposal.from_dict(p.to_dict())
    assert q.labels.tolist() == [0, 0, -1, 1] and q.config == p.config and q.dbcv == 0.25
    assert p.to_dict()["cluster_count"] == 2


# -- DBCV ---------------------------------------------------------------------------

def dbcv_oracle(points, labels):
    """Plain-loop evaluation of the validity index (Kruskal MST, direct powers)."""
    pts = [list(map(float, p)) for p in points]
    r = len(pts[0])
    clusters = {}
    for i, l in enumerate(labels):
        if l != -1:
            clusters.setdefault(l, []).append(i)
    clusters = {k: v for k, v in clusters.items() if len(v) >= 2}

    def dist(i, j):
        return math.sqrt(sum((a - b) ** 2 for a, b in zip(pts[i], pts[j])))

    apts = {}
    for members in clusters.values():
        for i in members:
            s = sum((1.0 / dist(i, j)) ** r for j in members if j != i)
            apts[i] = (s / (len(members) - 1)) ** (-1.0 / r)

    def mr(i, j):
        return max(apts[i], apts[j], dist(i, j))

    total = 0.0
    for k, members in clusters.items():
        edges = sorted((mr(i, j), i, j) for i, j in itertools.combinations(members, 2))
        parent = {i: i for i in members}

        def find(x):
            while parent[x] != x:
                x = parent[x]
            return x

        spars = 0.0
        for w, i, j in edges:
            if find(i) != find(j):
                parent[find(i)] = find(j)
                spars = max(spars, w)
        sep = min(mr(i, j) for i in members for kk, other in clusters.items() if kk != k for j in other)
        total += len(members) / len(labels) * (sep - spars) / max(sep, spars)
    return total


def test_dbcv_matches_oracle():
    rng = np.random.default_rng(1)
    for _ in range(10):
        pts = rng.normal(size=(10, 2))
        labels = rng.integers(-1, 3, size=10)
        labels[:4] = [0, 0, 1, 1]
        assert dbcv_score(pts, labels) == pytest.approx(dbcv_oracle(pts, labels), abs=1e-9)


def test_dbcv_planted_blobs_positive_and_beats_random():
    pts = np.hstack([TWO_BLOBS, np.zeros((10, 1))])
    planted = [0] * 5 + [1] * 5
    score = dbcv_score(pts, planted)
    assert score > 0
    assert score == pytest.approx(dbcv_oracle(pts, planted), abs=1e-9)
    for seed in range(10):
        random_labels = np.random.default_rng(seed).integers(0, 2, size=10)
        random_labels[:2] = [0, 1]
        assert dbcv_score(pts, random_labels) < score


def test_dbcv_comparative_invariance_under_scaling():
    pts, truth = make_blobs(seed=3, n_per=15)
    rng = np.random.default_rng(0)
    random_labels = rng.integers(0, 3, size=len(truth))
    for transform in (lambda x: x, lambda x: 7.5 * x + 3.0):
        x = transform(pts)
        assert dbcv_score(x, truth) > dbcv_score(x, random_labels)


def test_dbcv_single_cluster_undefined():
    with pytest.raises(UndefinedScoreError):
        dbcv_score(TWO_BLOBS, [0] * 10)
    with pytest.raises(UndefinedScoreError):
        dbcv_score(TWO_BLOBS, [0] * 9 + [1])  # singleton clusters do not count


# -- grid search --------------------------------------------------------------------------

def test_resolve_grid_rounds_half_up_and_dedupes():
    grid = resolve_grid(30)
    sizes = sorted({c.min_cluster_size for c in grid})
    # 0.05*30=1.5 -> 2, 0.1*30=3, 5, 0.2*30=6, 0.25*30=7.5 -> 8, 10, 15
    assert sizes == [2, 3, 5, 6, 8, 10, 15]
    assert len(grid) == len(sizes) * 4
    assert sorted({c.min_cluster_size for c in resolve_grid(6)}) == [2, 5, 6]


def test_grid_search_recovers_three_blobs(blobs):
    pts, truth = blobs
    result = grid_search_clustering(ReducedEmbedding(pts, "svd"))
    best = result.best_proposal
    assert best.cluster_count == 3
    assert adjusted_rand_index(best.labels, truth) >= 0.95
    top = max(t.dbcv for t in result.trials)
    assert result.trials[result.best].dbcv == top
    tied = [t for t in result.trials if t.dbcv == top]
    assert result.trials[result.best].config == min(
        (t.config for t in tied), key=lambda c: (c.min_cluster_size, c.min_samples))


def test_grid_search_records_failures_with_sentinel():
    pts = np.vstack([TWO_BLOBS, TWO_BLOBS + 0.05])
    grid = [ClusteringConfig(min_cluster_size=3, min_samples=2),
            ClusteringConfig(min_cluster_size=15, min_samples=2)]  # one cluster at best -> undefined
    result = grid_search_clustering(pts, grid)
    assert result.trials[1].dbcv == DBCV_SENTINEL and result.trials[1].error
    assert result.best == 0
    table = result.table()
    assert table[1]["cluster_count"] is None


def test_grid_search_all_fail():
    with pytest.raises(NoValidClusteringError):
        grid_search_clustering(np.ones((8, 2)), [ClusteringConfig(min_cluster_size=3)])
    with pytest.raises(ArgumentError):
        grid_search_clustering(np.ones((4, 2)))


def test_parallel_grid_equals_serial(blobs):
    pts, _ = blobs
    grid = resolve_grid(len(pts))[:8]
    a = grid_search_clustering(pts, grid, max_workers=1)
    b = grid_search_clustering(pts, grid, max_workers=4)
    assert a.table() == b.table() and a.best == b.best
