"""HDBSCAN cluster proposals, DBCV scoring and the hyperparameter grid search.

Everything here is exact and O(N^2) in memory and time: a dense distance matrix,
Prim's MST with index-order tie-breaking, and excess-of-mass extraction over the
condensed tree. That is fine for desk-scale corpora (a few thousand points).
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist
from scipy.special import logsumexp

from .errors import (
    ArgumentError,
    ClusterJudgeError,
    NoValidClusteringError,
    UndefinedScoreError,
    ValidationError,
)
from .unionfind import UnionFind
from .vectorize import ReducedEmbedding

NOISE = -1
DBCV_SENTINEL = -1.0

MIN_SAMPLES_GRID = (2, 3, 5, 10)
MIN_CLUSTER_SIZE_GRID = (5, 10, 15, 0.05, 0.1, 0.2, 0.25)  # floats are fractions of N


@dataclass(frozen=True)
class ClusteringConfig:
    min_cluster_size: int = 5
    min_samples: int = 2
    metric: str = "euclidean"
    selection_method: str = "eom"

    def __post_init__(self):
        if self.min_cluster_size < 2:
            raise ArgumentError("min_cluster_size must be >= 2")
        if self.min_samples < 1:
            raise ArgumentError("min_samples must be >= 1")
        if self.selection_method != "eom":
            raise ArgumentError("only excess-of-mass selection is supported")

    def to_dict(self) -> dict:
        return {
            "min_cluster_size": self.min_cluster_size,
            "min_samples": self.min_samples,
            "metric": self.metric,
            "selection_method": self.selection_method,
        }


@dataclass
class ClusterProposal:
    labels: np.ndarray
    config: ClusteringConfig
    dbcv: float = DBCV_SENTINEL

    @property
    def cluster_count(self) -> int:
        return int(len(np.unique(self.labels[self.labels != NOISE])))

    def members(self, cluster_id: int) -> np.ndarray:
        return np.flatnonzero(self.labels == cluster_id)

    def to_dict(self) -> dict:
        return {
            "labels": [int(v) for v in self.labels],
            "config": self.config.to_dict(),
            "dbcv": self.dbcv,
            "cluster_count": self.cluster_count,
        }

    @classmethod
    def from_dict(cls, d: dict) -> ClusterProposal:
        dbcv = d.get("dbcv")
        return cls(np.asarray(d["labels"], dtype=int), ClusteringConfig(**d["config"]),
                   DBCV_SENTINEL if dbcv is None else float(dbcv))


@dataclass
class Trial:
    config: ClusteringConfig
    dbcv: float
    proposal: ClusterProposal | None = None
    error: str | None = None


@dataclass
class GridSearchResult:
    trials: list[Trial] = field(default_factory=list)
    best: int = 0

    @property
    def best_proposal(self) -> ClusterProposal:
        return self.trials[self.best].proposal

    def table(self) -> list[dict]:
        return [
            {**t.config.to_dict(), "dbcv": t.dbcv,
             "cluster_count": None if t.proposal is None else t.proposal.cluster_count,
             "error": t.error}
            for t in self.trials
        ]


# -- graph primitives -------------------------------------------------------

def prim_mst(weights: np.ndarray) -> list[tuple[int, int, float]]:
    """Exact MST of a dense symmetric weight matrix.

    Grows from vertex 0; among equal candidates the lowest index wins, and an
    existing attachment is only replaced by a strictly lighter edge.
    Returns ``(parent, child, weight)`` edges in insertion order.
    """
    n = weights.shape[0]
    if n <= 1:
        return []
    in_tree = np.zeros(n, dtype=bool)
    best = np.full(n, np.inf)
    parent = np.full(n, -1, dtype=np.int64)
    current = 0
    in_tree[0] = True
    edges = []
    for _ in range(n - 1):
        row = weights[current]
        update = (~in_tree) & (row < best)
        best[update] = row[update]
        parent[update] = current
        candidates = np.where(in_tree, np.inf, best)
        nxt = int(np.argmin(candidates))
        edges.append((int(parent[nxt]), nxt, float(best[nxt])))
        in_tree[nxt] = True
        current = nxt
    return edges


def core_distances(dist: np.ndarray, min_samples: int) -> np.ndarray:
    """Distance to the ``min_samples``-th nearest point, counting the point itself."""
    k = min_samples - 1
    return np.partition(dist, k, axis=1)[:, k]


def mutual_reachability(dist: np.ndarray, core: np.ndarray) -> np.ndarray:
    return np.maximum(dist, np.maximum.outer(core, core))


@dataclass
class Hierarchy:
    """Single-linkage tree in which all merges at the same distance happen at once.

    Internal node ``n + i`` has ``children[i]`` (sorted node ids), merge distance
    ``height[i]`` and ``size[i]`` points; the root is the last node. Because tied
    merges are grouped, the tree does not depend on which of several equal-weight
    MSTs was found, so it is invariant to the order of the input rows.
    """
    n: int
    children: list[list[int]]
    height: list[float]
    size: list[int]

    @property
    def root(self) -> int:
        return self.n + len(self.children) - 1

    def size_of(self, node: int) -> int:
        return 1 if node < self.n else self.size[node - self.n]

    def leaves(self, node: int) -> list[int]:
        out, stack = [], [node]
        while stack:
            v = stack.pop()
            if v < self.n:
                out.append(v)
            else:
                stack.extend(self.children[v - self.n])
        return out


def merge_hierarchy(n: int, edges) -> Hierarchy:
    """Agglomerate the MST ``edges`` in order of weight, one level per distinct weight."""
    ordered = sorted(edges, key=lambda e: e[2])
    uf = UnionFind(n)
    node_of = list(range(n))  # union-find root -> current tree node
    h = Hierarchy(n, [], [], [])
    i = 0
    while i < len(ordered):
        w = ordered[i][2]
        j = i
        while j < len(ordered) and ordered[j][2] == w:
            j += 1
        touched: dict[int, int] = {}
        for a, b, _ in ordered[i:j]:
            for v in (a, b):
                r = uf.find(v)
                touched.setdefault(r, node_of[r])
        for a, b, _ in ordered[i:j]:
            uf.union(a, b)
        groups: dict[int, list[int]] = {}
        for r, node in touched.items():
            groups.setdefault(uf.find(r), []).append(node)
        for root, kids in groups.items():
            h.children.append(sorted(kids))
            h.height.append(float(w))
            h.size.append(sum(h.size_of(k) for k in kids))
            node_of[root] = n + len(h.children) - 1
        i = j
    return h


def _lambda(distance: float) -> float:
    return math.inf if distance <= 0 else 1.0 / distance


def condense_tree(h: Hierarchy, min_cluster_size: int):
    """Collapse the hierarchy at ``min_cluster_size``.

    At each split, children smaller than ``min_cluster_size`` fall out as points.
    Two or more large children each start a new condensed cluster; a single large
    child carries on as its parent. Returns rows ``(parent, child, lambda,
    child_size)``; children below ``n`` are points, the root cluster is ``n``.
    """
    n = h.n
    relabel = {h.root: n}
    next_label = n + 1
    rows = []
    stack = [h.root]
    while stack:
        node = stack.pop()
        parent = relabel[node]
        lam = _lambda(h.height[node - n])
        kids = h.children[node - n]
        big = [k for k in kids if h.size_of(k) >= min_cluster_size]
        for k in kids:
            if h.size_of(k) < min_cluster_size:
                rows.extend((parent, p, lam, 1) for p in h.leaves(k))
        if len(big) >= 2:
            for k in big:
                relabel[k] = next_label
                rows.append((parent, next_label, lam, h.size_of(k)))
                next_label += 1
                stack.append(k)
        elif big:
            relabel[big[0]] = parent
            stack.append(big[0])
    return np.array(rows, dtype=[("parent", "i8"), ("child", "i8"), ("lam", "f8"), ("size", "i8")])


def _stabilities(tree, n: int) -> dict[int, float]:
    """Sum over each cluster's departures of ``(lambda - lambda_birth) * size`` (exactly rounded)."""
    birth = {n: 0.0}
    for row in tree:
        if row["child"] >= n:
            birth[int(row["child"])] = float(row["lam"])
    terms: dict[int, list[float]] = {c: [] for c in birth}
    for row in tree:
        p = int(row["parent"])
        lam = float(row["lam"])
        if lam != birth[p]:
            terms[p].append((lam - birth[p]) * int(row["size"]))
    return {c: math.fsum(t) for c, t in terms.items()}


def excess_of_mass(tree, n: int) -> set[int]:
    stability = _stabilities(tree, n)
    children: dict[int, list[int]] = {c: [] for c in stability}
    for row in tree:
        if row["child"] >= n:
            children[int(row["parent"])].append(int(row["child"]))
    selected = {c: False for c in stability}
    for c in sorted(stability, reverse=True):
        if c == n:
            continue
        subtree = math.fsum(stability[k] for k in children[c])
        if children[c] and subtree > stability[c]:
            stability[c] = subtree
        else:
            selected[c] = True
            stack = list(children[c])
            while stack:
                k = stack.pop()
                selected[k] = False
                stack.extend(children[k])
    return {c for c, s in selected.items() if s}


def _labels_from_tree(tree, n: int, selected: set[int]) -> np.ndarray:
    cluster_parent = {int(r["child"]): int(r["parent"]) for r in tree if r["child"] >= n}
    point_parent = {int(r["child"]): int(r["parent"]) for r in tree if r["child"] < n}

    def owner(c):
        while c is not None:
            if c in selected:
                return c
            c = cluster_parent.get(c)
        return None

    raw = np.full(n, NOISE, dtype=np.int64)
    for p, c in point_parent.items():
        o = owner(c)
        if o is not None:
            raw[p] = o
    return canonical_labels(raw)


def canonical_labels(labels) -> np.ndarray:
    """Renumber clusters 0..K-1 by the index of their first member; noise stays -1."""
    labels = np.asarray(labels)
    out = np.full(len(labels), NOISE, dtype=np.int64)
    mapping: dict = {}
    for i, lab in enumerate(labels.tolist()):
        if lab == NOISE:
            continue
        if lab not in mapping:
            mapping[lab] = len(mapping)
        out[i] = mapping[lab]
    return out


# -- public operations ------------------------------------------------------

def _points(embedding) -> np.ndarray:
    x = embedding.matrix if isinstance(embedding, ReducedEmbedding) else np.asarray(embedding, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if not np.all(np.isfinite(x)):
        raise ValidationError("embedding contains non-finite coordinates")
    return x


def run_hdbscan(embedding, config: ClusteringConfig) -> ClusterProposal:
    """Cluster the rows of ``embedding`` with HDBSCAN* (excess-of-mass selection).

    Parameters
    ----------
    embedding : ReducedEmbedding or array-like of shape (N, d)
    config : ClusteringConfig

    Returns
    -------
    ClusterProposal
        Labels are contiguous from 0 in order of first member; noise is -1.
        ``dbcv`` is left at the sentinel; score it with :func:`dbcv_score`.
    """
    x = _points(embedding)
    n = x.shape[0]
    if n < config.min_cluster_size:
        raise ArgumentError(f"N={n} is smaller than min_cluster_size={config.min_cluster_size}")
    if config.min_samples > n:
        raise ArgumentError(f"min_samples={config.min_samples} exceeds N={n}")
    dist = cdist(x, x, metric=config.metric)
    core = core_distances(dist, config.min_samples)
    mreach = mutual_reachability(dist, core)
    edges = prim_mst(mreach)
    if n == 1 or max(w for _, _, w in edges) == 0.0:
        return ClusterProposal(np.zeros(n, dtype=np.int64), config)
    tree = condense_tree(merge_hierarchy(n, edges), config.min_cluster_size)
    labels = _labels_from_tree(tree, n, excess_of_mass(tree, n))
    return ClusterProposal(labels, config)


def _all_points_core(dist: np.ndarray, dim: int) -> np.ndarray:
    """``((sum_y (1/d(x,y))^dim) / (n-1)) ** (-1/dim)`` per row, evaluated in log space."""
    m = dist.shape[0]
    out = np.empty(m)
    for i in range(m):
        d = np.delete(dist[i], i)
        if np.any(d == 0):
            out[i] = 0.0
            continue
        log_mean = logsumexp(-dim * np.log(d)) - math.log(m - 1)
        out[i] = math.exp(-log_mean / dim)
    return out


def dbcv_score(embedding, labels) -> float:
    """Density-based cluster validity of a labelling, in [-1, 1].

    Noise (-1) counts toward N but belongs to no cluster. Clusters with fewer than
    two members are ignored; at least two remaining clusters are required.
    """
    x = _points(embedding)
    labels = np.asarray(labels)
    if len(labels) != x.shape[0]:
        raise ValidationError("labels and embedding differ in length")
    ids = [c for c in np.unique(labels) if c != NOISE and np.sum(labels == c) >= 2]
    if len(ids) < 2:
        raise UndefinedScoreError("DBCV needs at least two clusters with two or more members")
    n_total = len(labels)
    dim = x.shape[1]
    members = [np.flatnonzero(labels == c) for c in ids]
    dist = cdist(x, x)
    apts = np.zeros(x.shape[0])
    for idx in members:
        apts[idx] = _all_points_core(dist[np.ix_(idx, idx)], dim)
    in_any = np.concatenate(members)
    score = 0.0
    for idx in members:
        inner = np.maximum(dist[np.ix_(idx, idx)], np.maximum.outer(apts[idx], apts[idx]))
        sparseness = max(w for _, _, w in prim_mst(inner))
        others = np.setdiff1d(in_any, idx)
        cross = np.maximum(dist[np.ix_(idx, others)], np.maximum.outer(apts[idx], apts[others]))
        separation = float(cross.min())
        denom = max(separation, sparseness)
        validity = 0.0 if denom == 0 else (separation - sparseness) / denom
        score += len(idx) / n_total * validity
    return float(score)


def resolve_grid(n: int, sizes=MIN_CLUSTER_SIZE_GRID, samples=MIN_SAMPLES_GRID) -> list[ClusteringConfig]:
    """Expand the grid for ``n`` points: fractions round half-up, clamp to [2, n], dedupe."""
    resolved = set()
    for s in sizes:
        value = int(math.floor(s * n + 0.5)) if isinstance(s, float) else int(s)
        resolved.add(min(max(value, 2), n))
    return [ClusteringConfig(min_cluster_size=s, min_samples=m)
            for s in sorted(resolved) for m in sorted(set(samples))]


def _run_trial(x, config) -> Trial:
    try:
        proposal = run_hdbscan(x, config)
        proposal.dbcv = dbcv_score(x, proposal.labels)
        return Trial(config, proposal.dbcv, proposal)
    except ClusterJudgeError as exc:
        return Trial(config, DBCV_SENTINEL, None, f"{type(exc).__name__}: {exc}")


def grid_search_clustering(embedding, grid: list[ClusteringConfig] | None = None,
                           max_workers: int = 1) -> GridSearchResult:
    """Run HDBSCAN for every grid configuration and keep the DBCV maximiser.

    Failed trials score the sentinel -1. Ties go to the smaller
    ``min_cluster_size`` and then the smaller ``min_samples``.
    """
    x = _points(embedding)
    n = x.shape[0]
    if n < 5:
        raise ArgumentError("grid search needs at least 5 points")
    grid = resolve_grid(n) if grid is None else list(grid)
    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            trials = list(pool.map(lambda c: _run_trial(x, c), grid))
    else:
        trials = [_run_trial(x, c) for c in grid]
    valid = [i for i, t in enumerate(trials) if t.proposal is not None]
    if not valid:
        raise NoValidClusteringError("no grid configuration produced a scorable clustering")
    best = min(valid, key=lambda i: (-trials[i].dbcv, trials[i].config.min_cluster_size,
                                     trials[i].config.min_samples))
    result = GridSearchResult(trials, best)
    return result
