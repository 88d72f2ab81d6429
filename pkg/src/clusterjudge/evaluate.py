"""Cluster-quality metrics and the rank/contingency statistics used to compare methods."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist
from scipy.special import gammaincc
from scipy.stats import rankdata

from .errors import ArgumentError, DegenerateError, UndefinedMetricError, ValidationError

NOISE = -1
EXACT_MWU_MAX_TOTAL = 12


@dataclass(frozen=True)
class StatResult:
    statistic: float
    p_value: float | None = None
    df: int | None = None
    method: str = ""
    warnings: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {"statistic": self.statistic, "p_value": self.p_value, "df": self.df,
                "method": self.method, "warnings": list(self.warnings)}


@dataclass
class QualityReport:
    cluster_count: int
    silhouette: float | None
    davies_bouldin: float | None
    intra_coherence: dict[int, float] = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "C": self.cluster_count,
            "S": self.silhouette,
            "DB": self.davies_bouldin,
            "intra_coherence": {str(k): v for k, v in self.intra_coherence.items()},
            "notes": list(self.notes),
        }


def _clustered(points, labels):
    x = np.asarray(points, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    labels = np.asarray(labels)
    if len(labels) != x.shape[0]:
        raise ValidationError("points and labels differ in length")
    keep = labels != NOISE
    return x[keep], labels[keep]


# -- validity indices -------------------------------------------------------

def silhouette(points, labels) -> float:
    """Mean silhouette over non-noise points (Euclidean); singletons score 0."""
    x, labels = _clustered(points, labels)
    ids, inverse = np.unique(labels, return_inverse=True)
    if len(ids) < 2:
        raise UndefinedMetricError("silhouette needs at least two clusters")
    dist = cdist(x, x)
    k = len(ids)
    onehot = np.zeros((len(labels), k))
    onehot[np.arange(len(labels)), inverse] = 1.0
    sizes = onehot.sum(axis=0)
    sums = dist @ onehot  # total distance from each point to each cluster
    own = sizes[inverse]
    a = np.where(own > 1, sums[np.arange(len(labels)), inverse] / np.maximum(own - 1, 1), 0.0)
    mean_other = sums / sizes
    mean_other[np.arange(len(labels)), inverse] = np.inf
    b = mean_other.min(axis=1)
    denom = np.maximum(a, b)
    s = np.where((own > 1) & (denom > 0), (b - a) / np.where(denom > 0, denom, 1.0), 0.0)
    return float(np.mean(s))


def davies_bouldin(points, labels) -> float:
    """Mean over clusters of the worst ``(scatter_i + scatter_j) / d(centroid_i, centroid_j)``."""
    x, labels = _clustered(points, labels)
    ids = np.unique(labels)
    if len(ids) < 2:
        raise UndefinedMetricError("Davies-Bouldin needs at least two clusters")
    centroids = np.array([x[labels == c].mean(axis=0) for c in ids])
    scatter = np.array([np.linalg.norm(x[labels == c] - centroids[i], axis=1).mean()
                        for i, c in enumerate(ids)])
    sep = cdist(centroids, centroids)
    worst = np.zeros(len(ids))
    for i in range(len(ids)):
        for j in range(len(ids)):
            if i == j:
                continue
            if sep[i, j] == 0:
                raise ZeroDivisionError(f"clusters {ids[i]} and {ids[j]} share a centroid")
            worst[i] = max(worst[i], (scatter[i] + scatter[j]) / sep[i, j])
    return float(worst.mean())


def intra_cluster_coherence(embeddings, labels) -> dict[int, float]:
    """Mean pairwise cosine similarity per cluster; clusters under two members are skipped."""
    v = np.asarray(embeddings, dtype=float)
    labels = np.asarray(labels)
    out = {}
    for c in np.unique(labels):
        if c == NOISE:
            continue
        m = v[labels == c]
        if len(m) < 2:
            continue
        norms = np.linalg.norm(m, axis=1, keepdims=True)
        unit = m / np.where(norms == 0, 1.0, norms)  # a zero vector has cosine 0 with everything
        sim = unit @ unit.T
        iu = np.triu_indices(len(m), k=1)
        out[int(c)] = float(sim[iu].mean())
    return out


def quality_report(points, labels, embeddings=None) -> QualityReport:
    """C, S and DB on ``points`` plus coherence on ``embeddings`` (defaults to ``points``).

    Undefined metrics are reported as ``None`` with a note instead of raising.
    """
    labels = np.asarray(labels)
    ids = np.unique(labels[labels != NOISE])
    notes = []
    try:
        s = silhouette(points, labels)
    except UndefinedMetricError as exc:
        s = None
        notes.append(f"silhouette undefined: {exc}")
    try:
        db = davies_bouldin(points, labels)
    except (UndefinedMetricError, ZeroDivisionError) as exc:
        db = None
        notes.append(f"davies_bouldin undefined: {exc}")
    coherence = intra_cluster_coherence(points if embeddings is None else embeddings, labels)
    skipped = len(ids) - len(coherence)
    if skipped:
        notes.append(f"{skipped} clusters with fewer than 2 members skipped for coherence")
    return QualityReport(len(ids), s, db, coherence, notes)


def adjusted_rand_index(labels_a, labels_b) -> float:
    """Hubert-Arabie adjusted Rand index between two labellings (noise is an ordinary label)."""
    a = np.asarray(labels_a)
    b = np.asarray(labels_b)
    if a.shape != b.shape or a.ndim != 1:
        raise ValidationError("labellings must be 1-D and of equal length")
    _, ia = np.unique(a, return_inverse=True)
    _, ib = np.unique(b, return_inverse=True)
    table = np.zeros((ia.max() + 1, ib.max() + 1), dtype=np.int64)
    np.add.at(table, (ia, ib), 1)

    def pairs(x):
        return float(np.sum(x * (x - 1) / 2.0))

    index = pairs(table)
    rows, cols = pairs(table.sum(axis=1)), pairs(table.sum(axis=0))
    total = len(a) * (len(a) - 1) / 2.0
    expected = rows * cols / total if total else 0.0
    maximum = (rows + cols) / 2.0
    if maximum == expected:
        return 1.0  # both labellings trivial (one cluster each, or all singletons)
    return (index - expected) / (maximum - expected)


# -- statistics ---------------------------------------------------------------

def chi2_sf(x: float, df: int) -> float:
    """Upper tail of the chi-square distribution via the regularised incomplete gamma."""
    if x <= 0:
        return 1.0
    return float(gammaincc(df / 2.0, x / 2.0))


def _normal_sf(z: float) -> float:
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def _tie_term(ranks) -> float:
    _, counts = np.unique(ranks, return_counts=True)
    return float(np.sum(counts ** 3 - counts))


def kruskal_wallis(groups) -> StatResult:
    """Kruskal-Wallis H with mid-ranks and tie correction; p from chi-square(g - 1)."""
    groups = [np.asarray(g, dtype=float).ravel() for g in groups]
    if len(groups) < 2:
        raise ArgumentError("need at least two groups")
    if any(len(g) == 0 for g in groups):
        raise ArgumentError("groups must be non-empty")
    pooled = np.concatenate(groups)
    n = len(pooled)
    ranks = rankdata(pooled)
    tie_factor = 1.0 - _tie_term(pooled) / (n ** 3 - n)
    if tie_factor <= 0:
        raise DegenerateError("all values are identical; H is undefined")
    h = 0.0
    start = 0
    for g in groups:
        r = ranks[start:start + len(g)]
        start += len(g)
        h += len(g) * (r.mean() - (n + 1) / 2.0) ** 2
    h = 12.0 / (n * (n + 1)) * h / tie_factor
    df = len(groups) - 1
    return StatResult(float(h), chi2_sf(h, df), df, "kruskal-wallis")


def _u_statistic(ranks_a, n_a: int, n_b: int) -> float:
    return float(np.sum(ranks_a) - n_a * (n_a + 1) / 2.0)


def mann_whitney_u(a, b, exact_max_total: int = EXACT_MWU_MAX_TOTAL) -> StatResult:
    """Two-sided Mann-Whitney U for sample ``a``.

    With ``len(a) + len(b) <= exact_max_total`` the p-value enumerates every way of
    splitting the pooled mid-ranks into groups of the observed sizes; otherwise a
    tie- and continuity-corrected normal approximation is used.
    """
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if len(a) == 0 or len(b) == 0:
        raise ArgumentError("samples must be non-empty")
    n_a, n_b = len(a), len(b)
    n = n_a + n_b
    ranks = rankdata(np.concatenate([a, b]))
    u = _u_statistic(ranks[:n_a], n_a, n_b)
    centre = n_a * n_b / 2.0
    if n <= exact_max_total:
        observed = abs(u - centre)
        extreme = total = 0
        for combo in itertools.combinations(range(n), n_a):
            total += 1
            if abs(_u_statistic(ranks[list(combo)], n_a, n_b) - centre) >= observed - 1e-9:
                extreme += 1
        return StatResult(u, extreme / total, None, "mann-whitney-exact")
    var = n_a * n_b / 12.0 * ((n + 1) - _tie_term(ranks) / (n * (n - 1)))
    if var <= 0:
        return StatResult(u, 1.0, None, "mann-whitney-normal")
    z = (abs(u - centre) - 0.5) / math.sqrt(var)
    p = min(1.0, 2.0 * _normal_sf(max(z, 0.0)))
    return StatResult(u, p, None, "mann-whitney-normal")


def chi_square_independence(table) -> StatResult:
    """Pearson chi-square test of independence on an R x C count table."""
    obs = np.asarray(table, dtype=float)
    if obs.ndim != 2:
        raise ArgumentError("table must be two-dimensional")
    rows, cols = obs.sum(axis=1), obs.sum(axis=0)
    if np.any(rows <= 0) or np.any(cols <= 0):
        raise ArgumentError("every row and column must have a positive total")
    df = (obs.shape[0] - 1) * (obs.shape[1] - 1)
    if df < 1:
        raise ArgumentError(f"table {obs.shape} has zero degrees of freedom")
    expected = np.outer(rows, cols) / obs.sum()
    stat = float(np.sum((obs - expected) ** 2 / expected))
    warnings = ("some expected counts are below 5",) if np.any(expected < 5) else ()
    return StatResult(stat, chi2_sf(stat, df), df, "chi-square", warnings)


def cohens_kappa(rater_a, rater_b) -> StatResult:
    """Cohen's kappa with chance agreement from each rater's marginal frequencies."""
    rater_a, rater_b = list(rater_a), list(rater_b)
    if len(rater_a) != len(rater_b) or not rater_a:
        raise ArgumentError("ratings must be non-empty and of equal length")
    n = len(rater_a)
    p_o = sum(x == y for x, y in zip(rater_a, rater_b)) / n
    cats = set(rater_a) | set(rater_b)
    p_e = sum((rater_a.count(c) / n) * (rater_b.count(c) / n) for c in cats)
    if p_e == 1.0:
        raise DegenerateError("chance agreement is 1; kappa is undefined")
    return StatResult((p_o - p_e) / (1.0 - p_e), None, None, "cohen-kappa")


def pearson_r(x, y) -> StatResult:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) != len(y) or len(x) < 2:
        raise ArgumentError("need two equal-length samples of size >= 2")
    dx, dy = x - x.mean(), y - y.mean()
    sx, sy = math.sqrt(dx @ dx), math.sqrt(dy @ dy)
    if sx == 0 or sy == 0:
        raise DegenerateError("zero variance")
    r = float(np.clip((dx @ dy) / (sx * sy), -1.0, 1.0))
    return StatResult(r, None, None, "pearson")


def compare_methods(scores: dict[str, list[float]]) -> dict:
    """Kruskal-Wallis across all methods, then pairwise Mann-Whitney U (no correction)."""
    names = list(scores)
    out = {"groups": {k: len(v) for k, v in scores.items()}}
    usable = [k for k in names if len(scores[k]) > 0]
    try:
        out["kruskal_wallis"] = kruskal_wallis([scores[k] for k in usable]).to_dict()
    except (ArgumentError, DegenerateError) as exc:
        out["kruskal_wallis"] = {"error": str(exc)}
    pairs = {}
    for x, y in itertools.combinations(usable, 2):
        pairs[f"{x} vs {y}"] = mann_whitney_u(scores[x], scores[y]).to_dict()
    out["mann_whitney"] = pairs
    return out
