"""The three refinement stages applied to a cluster proposal.

1. coherence verification: summarise each cluster from its most central members and
   let the judge accept or reject the summary;
2. redundancy adjudication: merge surviving clusters whose summary embeddings are
   within a cosine threshold (transitively, via connected components);
3. label grounding: one candidate label per merged cluster, then consolidation of
   labels whose embeddings are within a second threshold.

Finally every document, clustered or not, is assigned one of the grounded labels.
"""
from __future__ import annotations

import logging
import statistics
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .corpus import Corpus
from .density import NOISE, ClusterProposal
from .errors import (
    ArgumentError,
    ClusterJudgeError,
    ParseError,
    ProviderError,
    SelectionError,
    UndefinedMetricError,
    ValidationError,
)
from .evaluate import davies_bouldin, silhouette
from .providers.judge import CoherenceVerdict, Judge
from .providers.templates import NONE_OF_THE_ABOVE
from .unionfind import threshold_components

logger = logging.getLogger(__name__)

DEFAULT_K = 5
DEFAULT_TAU_GRID = (0.75, 0.80, 0.85, 0.90)
DEFAULT_LABEL_TAU = 0.85
UNASSIGNED = "unassigned"


@dataclass
class ClusterSummary:
    cluster_id: int
    summary: str
    representative_ids: list[str]
    document_ids: list[str]
    verdict: CoherenceVerdict | None = None

    def to_dict(self) -> dict:
        return {
            "cluster_id": self.cluster_id,
            "summary": self.summary,
            "representative_ids": list(self.representative_ids),
            "document_ids": list(self.document_ids),
            "verdict": None if self.verdict is None else self.verdict.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> ClusterSummary:
        v = d.get("verdict")
        return cls(d["cluster_id"], d["summary"], list(d["representative_ids"]),
                   list(d["document_ids"]), None if v is None else CoherenceVerdict(**v))


@dataclass
class MergedCluster:
    member_cluster_ids: list[int]
    document_ids: list[str]
    summary: str | None = None

    def to_dict(self) -> dict:
        return {"member_cluster_ids": list(self.member_cluster_ids),
                "document_ids": list(self.document_ids), "summary": self.summary}


@dataclass
class RefinedStructure:
    clusters: list[MergedCluster]
    tau: float
    labels: list[str] = field(default_factory=list)
    candidate_labels: list[str] = field(default_factory=list)
    label_of_cluster: dict[int, str] = field(default_factory=dict)
    label_tau: float | None = None
    assignments: dict[str, str] = field(default_factory=dict)

    def document_labels(self, doc_ids: Sequence[str]) -> np.ndarray:
        """Merged-cluster index per document in ``doc_ids`` order; -1 for the rest."""
        index = {d: i for i, c in enumerate(self.clusters) for d in c.document_ids}
        return np.array([index.get(d, NOISE) for d in doc_ids], dtype=np.int64)

    def to_dict(self) -> dict:
        return {
            "tau": self.tau,
            "clusters": [c.to_dict() for c in self.clusters],
            "labels": list(self.labels),
            "candidate_labels": list(self.candidate_labels),
            "label_of_cluster": {str(k): v for k, v in self.label_of_cluster.items()},
            "label_tau": self.label_tau,
        }

    @classmethod
    def from_dict(cls, d: dict) -> RefinedStructure:
        return cls(
            clusters=[MergedCluster(**c) for c in d["clusters"]],
            tau=d["tau"],
            labels=list(d.get("labels", [])),
            candidate_labels=list(d.get("candidate_labels", [])),
            label_of_cluster={int(k): v for k, v in d.get("label_of_cluster", {}).items()},
            label_tau=d.get("label_tau"),
        )


def _unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    norms = np.linalg.norm(v, axis=1, keepdims=True)
    return v / np.where(norms == 0, 1.0, norms)


def cosine_matrix(vectors) -> np.ndarray:
    u = _unit(vectors)
    return np.clip(u @ u.T, -1.0, 1.0)


# -- stage 1 ------------------------------------------------------------------

def select_representatives(cluster_doc_ids: Sequence[str], doc_embeddings, k: int = DEFAULT_K) -> list[str]:
    """The ``k`` members closest (Euclidean) to the cluster centroid.

    ``doc_embeddings`` holds one row per entry of ``cluster_doc_ids``. Equal
    distances are ordered by document id, so the result for a smaller ``k`` is
    always a prefix of the result for a larger one.
    """
    ids = list(cluster_doc_ids)
    if not ids:
        raise ArgumentError("cluster is empty")
    if k < 1:
        raise ArgumentError("k must be >= 1")
    x = np.asarray(doc_embeddings, dtype=float)
    if x.shape[0] != len(ids):
        raise ValidationError("one embedding per member is required")
    dist = np.linalg.norm(x - x.mean(axis=0), axis=1)
    order = sorted(range(len(ids)), key=lambda i: (dist[i], ids[i]))
    return [ids[i] for i in order[:k]]


def _with_context(exc: ClusterJudgeError, context: str) -> ClusterJudgeError:
    return type(exc)(f"{context}: {exc}")


def coherence_filter(proposal: ClusterProposal, judge: Judge, corpus: Corpus, doc_embeddings,
                     k: int = DEFAULT_K) -> tuple[list[ClusterSummary], list[ClusterSummary]]:
    """Summarise and verify every cluster; split them into kept and discarded.

    Documents of discarded clusters are not re-clustered; they are simply
    absent from every kept cluster and get labels in the assignment stage.
    """
    labels = np.asarray(proposal.labels)
    if len(labels) != len(corpus):
        raise ValidationError("proposal and corpus differ in length")
    cluster_ids = sorted(int(c) for c in np.unique(labels) if c != NOISE)
    if not cluster_ids:
        raise ArgumentError("proposal has no clusters")
    emb = np.asarray(doc_embeddings, dtype=float)
    ids = corpus.ids
    texts = dict(zip(ids, corpus.texts))

    def one(cid: int) -> ClusterSummary:
        members = np.flatnonzero(labels == cid)
        member_ids = [ids[i] for i in members]
        reps = select_representatives(member_ids, emb[members], k)
        rep_texts = [texts[r] for r in reps]
        try:
            summary = judge.summarize(rep_texts)
            verdict = judge.verify_coherence(summary, rep_texts)
        except (ProviderError, ParseError) as exc:
            raise _with_context(exc, f"cluster {cid}") from exc
        return ClusterSummary(cid, summary, reps, member_ids, verdict)

    results = judge.map(one, cluster_ids)
    kept = [s for s in results if s.verdict.coherent]
    discarded = [s for s in results if not s.verdict.coherent]
    return kept, discarded


# -- stage 2 ------------------------------------------------------------------

def _components(summaries: Sequence[ClusterSummary], summary_embeddings, tau: float) -> list[list[int]]:
    if not 0 < tau <= 1:
        raise ArgumentError("tau must be in (0, 1]")
    emb = np.asarray(summary_embeddings, dtype=float)
    if emb.ndim != 2 or emb.shape[0] != len(summaries):
        raise ValidationError("one summary embedding per summary is required")
    if not summaries:
        return []
    comps = threshold_components(cosine_matrix(emb), tau)
    # canonical form: positions sorted by cluster id, components by smallest cluster id
    comps = [sorted(c, key=lambda i: summaries[i].cluster_id) for c in comps]
    return sorted(comps, key=lambda c: summaries[c[0]].cluster_id)


def merge_redundant(summaries: Sequence[ClusterSummary], summary_embeddings, tau: float,
                    judge: Judge | None = None) -> RefinedStructure:
    """Merge clusters connected by summary cosine similarity ``>= tau``.

    With a judge, each multi-member group gets a consolidated summary written from
    its members' summaries (largest clusters first); singletons keep theirs.
    Without one, merged groups carry no summary (used by the threshold search).
    """
    summaries = list(summaries)
    merged = []
    for comp in _components(summaries, summary_embeddings, tau):
        members = [summaries[i] for i in comp]
        doc_ids = [d for m in members for d in m.document_ids]
        if len(members) == 1:
            text = members[0].summary
        elif judge is None:
            text = None
        else:
            by_size = sorted(members, key=lambda m: (-len(m.document_ids), m.cluster_id))
            text = judge.merge_summaries([m.summary for m in by_size])
        merged.append(MergedCluster([m.cluster_id for m in members], doc_ids, text))
    return RefinedStructure(merged, tau)


@dataclass
class ThresholdGrid:
    rows: list[dict]
    selected: float | None
    note: str = ""

    def to_dict(self) -> dict:
        return {"rows": self.rows, "selected": self.selected, "note": self.note}

    def to_tsv(self) -> str:
        def fmt(v):
            return "NA" if v is None else (f"{v:.9g}" if isinstance(v, float) else str(v))
        lines = ["tau\tC\tS\tDB"]
        lines += [f"{fmt(r['tau'])}\t{r['C']}\t{fmt(r['S'])}\t{fmt(r['DB'])}" for r in self.rows]
        return "\n".join(lines) + "\n"


def _safe_metrics(points, labels) -> tuple[float | None, float | None]:
    try:
        s = silhouette(points, labels)
    except UndefinedMetricError:
        s = None
    try:
        db = davies_bouldin(points, labels)
    except (UndefinedMetricError, ZeroDivisionError):
        db = None
    return s, db


def select_threshold(rows: Sequence[dict]) -> float:
    """Max silhouette among rows with ``C <= 1.25 * median(C)``; ties go to the smaller tau."""
    if not rows:
        raise SelectionError("empty threshold grid")
    cap = 1.25 * statistics.median(r["C"] for r in rows)
    eligible = [r for r in rows if r["S"] is not None and r["DB"] is not None and r["C"] <= cap]
    if not eligible:
        raise SelectionError("no threshold yields two or more clusters within the count cap")
    return min(eligible, key=lambda r: (-r["S"], r["tau"]))["tau"]


def grid_search_threshold(summaries: Sequence[ClusterSummary], summary_embeddings, doc_embeddings,
                          doc_ids: Sequence[str], grid: Sequence[float] = DEFAULT_TAU_GRID) -> ThresholdGrid:
    """Evaluate C, S and DB of the merged partition at each tau.

    S and DB are computed on ``doc_embeddings`` (rows aligned with ``doc_ids``);
    ``S_summary``/``DB_summary`` repeat them on the summary embeddings. Raises
    :class:`SelectionError` (with ``.grid`` attached) when no row is selectable.
    """
    grid = list(grid)
    if not grid:
        raise ArgumentError("threshold grid is empty")
    summaries = list(summaries)
    doc_emb = np.asarray(doc_embeddings, dtype=float)
    summ_emb = np.asarray(summary_embeddings, dtype=float)
    rows = []
    for tau in grid:
        merged = merge_redundant(summaries, summ_emb, tau)
        labels = merged.document_labels(doc_ids)
        s, db = _safe_metrics(doc_emb, labels)
        comp_of = {cid: i for i, c in enumerate(merged.clusters) for cid in c.member_cluster_ids}
        s_sum, db_sum = _safe_metrics(summ_emb, [comp_of[m.cluster_id] for m in summaries])
        rows.append({"tau": tau, "C": len(merged.clusters), "S": s, "DB": db,
                     "S_summary": s_sum, "DB_summary": db_sum})
    try:
        selected = select_threshold(rows)
    except SelectionError as exc:
        exc.grid = ThresholdGrid(rows, None, str(exc))
        raise
    return ThresholdGrid(rows, selected)


# -- stage 3 ------------------------------------------------------------------

def ground_labels(refined: RefinedStructure, judge: Judge, embedder,
                  label_tau: float = DEFAULT_LABEL_TAU) -> RefinedStructure:
    """Generate one label per merged cluster, then consolidate near-duplicate labels."""
    if not refined.clusters:
        raise ArgumentError("no clusters to label")

    def one(i: int) -> str:
        cluster = refined.clusters[i]
        summary = cluster.summary or ""
        try:
            return judge.generate_label(summary)
        except (ProviderError, ParseError) as exc:
            raise _with_context(exc, f"merged cluster {i} ({cluster.member_cluster_ids})") from exc

    candidates = judge.map(one, range(len(refined.clusters)))
    vectors = embedder.embed_texts(candidates)
    final_of: dict[int, str] = {}
    for comp in threshold_components(cosine_matrix(vectors), label_tau):
        if len(comp) == 1:
            final = candidates[comp[0]]
        else:
            final = judge.consolidate_labels([candidates[i] for i in comp])
        for i in comp:
            final_of[i] = final
    labels = list(dict.fromkeys(final_of[i] for i in range(len(candidates))))
    refined.candidate_labels = candidates
    refined.label_of_cluster = {i: final_of[i] for i in range(len(candidates))}
    refined.labels = labels
    refined.label_tau = label_tau
    return refined


@dataclass
class AssignmentResult:
    assignments: dict[str, str]
    errors: dict[str, str] = field(default_factory=dict)

    def counts(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for label in self.assignments.values():
            out[label] = out.get(label, 0) + 1
        return out


def assign_corpus(corpus: Corpus, labels: Sequence[str], judge: Judge) -> AssignmentResult:
    """Ask the judge for the best label of every document.

    Documents whose reply cannot be parsed after the reprompt are marked
    ``"unassigned"`` and listed in ``errors``; the run continues.
    """
    labels = list(labels)
    if not labels:
        raise ArgumentError("no labels to assign")

    def one(doc):
        try:
            return judge.assign_label(doc.text, labels), None
        except ParseError as exc:
            return UNASSIGNED, str(exc)

    results = judge.map(one, corpus.documents)
    assignments, errors = {}, {}
    for doc, (label, err) in zip(corpus.documents, results):
        assignments[doc.id] = label
        if err is not None:
            errors[doc.id] = err
    return AssignmentResult(assignments, errors)


# -- embedding-only baseline ------------------------------------------------------

def merge_by_centroids(proposal: ClusterProposal, doc_embeddings, tau: float) -> np.ndarray:
    """Refinement without a judge: merge clusters whose mean embeddings have cosine ``>= tau``."""
    labels = np.asarray(proposal.labels)
    emb = np.asarray(doc_embeddings, dtype=float)
    ids = sorted(int(c) for c in np.unique(labels) if c != NOISE)
    if not ids:
        return labels.copy()
    centroids = np.array([emb[labels == c].mean(axis=0) for c in ids])
    out = np.full(len(labels), NOISE, dtype=np.int64)
    for new, comp in enumerate(threshold_components(cosine_matrix(centroids), tau)):
        for i in comp:
            out[labels == ids[i]] = new
    return out


def is_choice(label: str, labels: Sequence[str]) -> bool:
    return label in labels or label == NONE_OF_THE_ABOVE
