"""Stage runners that connect the components through the run directory.

Every stage reads its inputs back from the files of earlier stages, so an
interrupted run resumed later sees exactly the values an uninterrupted run would.
"""
from __future__ import annotations

import logging
import math
from pathlib import Path

import numpy as np

from . import store
from .config import Config
from .corpus import Corpus, Document, cap_per_user, dedup_corpus, filter_keywords, load_corpus
from .density import ClusterProposal, grid_search_clustering, resolve_grid
from .errors import (ArgumentError, ClusterJudgeError, ConfigurationError, SelectionError,
                     StageFailedError, StageOrderError)
from .evaluate import chi_square_independence, compare_methods, quality_report
from .providers import (HashEmbedder, Judge, MockBackend, Pricing, RemoteChatBackend, RemoteEmbedder,
                        ResponseCache, UsageLedger)
from .providers.remote import resolve_api_key
from .providers.templates import NONE_OF_THE_ABOVE
from .refine import (UNASSIGNED, ClusterSummary, RefinedStructure, ThresholdGrid, assign_corpus,
                     coherence_filter, grid_search_threshold, ground_labels, merge_by_centroids,
                     merge_redundant)
from .temporal import (densest_window, label_universe, match_volume, restrict_to_window,
                       theme_month_correlations, theme_platform_table)
from .vectorize import ReducedEmbedding, load_external_reduction, vectorize

logger = logging.getLogger(__name__)

STAGES = store.STAGES
VERB_STAGES = {
    "ingest": ("01_corpus",),
    "cluster": ("02_vectors", "03_clusters"),
    "refine": ("04_summaries", "05_refined"),
    "label": ("06_labels",),
    "assign": ("07_assignments",),
    "evaluate": ("08_report",),
    "run": STAGES,
}
METHODS = ("hdbscan", "embedding_only", "refined")
RUN_CONFIG = "config.yaml"


def check_credentials(config: Config) -> None:
    """Fail fast when a remote provider is configured but its key variable is unset."""
    if config.get("provider.kind") == "remote":
        resolve_api_key(config.get("provider.chat.api_key_env"))
    if config.get("provider.embedding.kind") == "remote":
        resolve_api_key(config.get("provider.embedding.api_key_env"))


def build_providers(config: Config, run_dir) -> tuple[Judge, object]:
    p = config.get("provider")
    cache = ResponseCache(p["cache_dir"] or Path(run_dir) / "cache")
    ledger = UsageLedger(Path(run_dir) / "usage.jsonl")
    chat = p["chat"]
    # the mock is billed at the configured chat prices so cost tracking and --max-cost stay meaningful offline
    pricing = Pricing(chat["prompt_per_1k"], chat["completion_per_1k"])
    if p["kind"] == "mock":
        if p["script"]:
            backend = MockBackend.from_file(p["script"], pricing=pricing)
        else:
            backend = MockBackend(pricing=pricing)
    elif p["kind"] == "remote":
        backend = RemoteChatBackend(chat["endpoint"], chat["model"], chat["api_key_env"], pricing)
    else:
        raise ConfigurationError(f"unknown provider kind {p['kind']!r}")
    emb = p["embedding"]
    if emb["kind"] == "hash":
        embedder = HashEmbedder(int(emb["dim"]))
    elif emb["kind"] == "remote":
        embedder = RemoteEmbedder(emb["endpoint"], emb["model"], emb["api_key_env"], cache=cache,
                                  ledger=ledger, pricing=Pricing(emb["prompt_per_1k"], 0.0))
    else:
        raise ConfigurationError(f"unknown embedding kind {emb['kind']!r}")
    judge = Judge(backend, cache, ledger, temperature=float(p["temperature"]),
                  max_workers=int(p["max_workers"]), max_cost=p["max_cost"])
    return judge, embedder


def _corpus_from_stage(payload: dict) -> Corpus:
    return Corpus([Document(**r) for r in payload["documents"]], payload["provenance"])


class Pipeline:
    def __init__(self, run_dir, config: Config, judge: Judge | None = None, embedder=None):
        self.run_dir = Path(run_dir)
        self.config = config
        self._judge = judge
        self._embedder = embedder

    # -- plumbing --

    def _providers(self):
        if self._judge is None or self._embedder is None:
            judge, embedder = build_providers(self.config, self.run_dir)
            self._judge = self._judge or judge
            self._embedder = self._embedder or embedder
        return self._judge, self._embedder

    @property
    def judge(self) -> Judge:
        return self._providers()[0]

    @property
    def embedder(self):
        return self._providers()[1]

    def open(self) -> dict:
        check_credentials(self.config)
        manifest = store.init_run(self.run_dir, self.config.digest())
        store.atomic_write_text(self.run_dir / RUN_CONFIG, self.config.to_yaml())
        return manifest

    def load(self, stage: str):
        return store.load_stage(self.run_dir, stage)

    def _is_current(self, stage: str, manifest: dict) -> bool:
        """Done and computed from the present output of the previous stage."""
        entry = manifest["stages"][stage]
        if entry["status"] != store.DONE:
            return False
        return entry["input_digest"] == self._input_digest(stage, manifest)

    def _input_digest(self, stage: str, manifest: dict) -> str | None:
        i = STAGES.index(stage)
        if i == 0:
            return manifest["config_digest"]
        return manifest["stages"][STAGES[i - 1]]["output_digest"]

    def run_stage(self, stage: str, force: bool = False) -> str:
        manifest = store.read_manifest(self.run_dir)
        i = STAGES.index(stage)
        if i > 0 and not self._is_current(STAGES[i - 1], manifest):
            raise StageOrderError(f"stage {stage} needs {STAGES[i - 1]} to be completed first")
        runner = getattr(self, f"_stage_{stage[3:]}")
        try:
            payload = runner()
        except ClusterJudgeError as exc:
            store.mark_failed(self.run_dir, stage)
            raise StageFailedError(stage, exc) from exc
        return store.save_stage(self.run_dir, stage, payload, self._input_digest(stage, manifest),
                                force=force)

    def run(self, verb: str = "run", force: bool = False) -> list[str]:
        """Run the stages of ``verb``, skipping the ones that are already current.

        Returns the names of the stages that were (re)computed.
        """
        stages = VERB_STAGES[verb]
        if stages[0] != STAGES[0]:
            store.read_manifest(self.run_dir)  # NotARunError unless a run already exists here
        self.open()
        ran = []
        with store.RunLock(self.run_dir):
            store.verify(self.run_dir)
            first = STAGES.index(stages[0])
            if first > 0 and not self._chain_current(STAGES[first - 1]):
                raise StageOrderError(f"{verb} needs stage {STAGES[first - 1]} to be completed first")
            for stage in stages:
                manifest = store.read_manifest(self.run_dir)
                if not force and self._is_current(stage, manifest):
                    continue
                if manifest["stages"][stage]["status"] == store.DONE:
                    store.invalidate_from(self.run_dir, stage)
                self.run_stage(stage)
                ran.append(stage)
        return ran

    def _chain_current(self, upto: str) -> bool:
        manifest = store.read_manifest(self.run_dir)
        return all(self._is_current(s, manifest) for s in STAGES[:STAGES.index(upto) + 1])

    def _judge_stage(self, fn):
        """Run ``fn`` with the judge and return its result and the cost of the requests it needed."""
        judge = self.judge
        judge.request_costs = {}
        result = fn(judge)
        return result, math.fsum(judge.request_costs.values())

    # -- stages --

    def _stage_corpus(self) -> dict:
        c = self.config
        path = c.get("corpus.path")
        if path is None:
            raise ConfigurationError("corpus.path is not set")
        corpus = load_corpus(path)
        loaded = len(corpus)
        if c.get("corpus.keywords"):
            corpus = filter_keywords(corpus, c.get("corpus.keywords"))
        if c.get("corpus.max_per_user"):
            corpus = cap_per_user(corpus, int(c.get("corpus.max_per_user")), int(c.get("run.seed")))
        removed = 0
        if c.get("corpus.dedup"):
            corpus, removed = dedup_corpus(corpus)
        if len(corpus) < 5:
            raise ArgumentError(f"only {len(corpus)} documents survive filtering")
        return {"documents": [d.to_record() for d in corpus], "provenance": corpus.provenance,
                "counts": {"loaded": loaded, "kept": len(corpus), "duplicates_removed": removed}}

    def _stage_vectors(self) -> dict:
        corpus = _corpus_from_stage(self.load("01_corpus"))
        external = self.config.get("vectorizer.external_reduction")
        if external:
            reduced = load_external_reduction(external, corpus)
            vocab_size = None
        else:
            vocab, reduced = vectorize(corpus, min_df=int(self.config.get("vectorizer.min_df")),
                                       rank=self.config.get("vectorizer.rank"),
                                       seed=int(self.config.get("run.seed")))
            vocab_size = len(vocab)
        doc_emb = self.embedder.embed_texts(corpus.texts)
        return {"ids": corpus.ids, "reducer": reduced.reducer_tag, "rank": reduced.r,
                "vocabulary_size": vocab_size, "reduced": reduced.matrix,
                "embedding_model": getattr(self.embedder, "model", "unknown"),
                "doc_embeddings": doc_emb}

    def _vectors(self):
        v = self.load("02_vectors")
        return v["ids"], np.asarray(v["reduced"], dtype=float), np.asarray(v["doc_embeddings"], dtype=float)

    def _stage_clusters(self) -> dict:
        ids, reduced, _ = self._vectors()
        c = self.config
        grid = resolve_grid(len(ids), c.get("clustering.min_cluster_size_grid"),
                            c.get("clustering.min_samples_grid"))
        result = grid_search_clustering(ReducedEmbedding(reduced, "stored"), grid,
                                        max_workers=int(c.get("clustering.max_workers")))
        return {"grid": result.table(), "best": result.best,
                "proposal": result.best_proposal.to_dict()}

    def _proposal(self) -> ClusterProposal:
        return ClusterProposal.from_dict(self.load("03_clusters")["proposal"])

    def _stage_summaries(self) -> dict:
        corpus = _corpus_from_stage(self.load("01_corpus"))
        _, _, doc_emb = self._vectors()
        proposal = self._proposal()
        k = int(self.config.get("refine.k_representatives"))
        (kept, discarded), cost = self._judge_stage(
            lambda j: coherence_filter(proposal, j, corpus, doc_emb, k))
        return {"k_representatives": k, "kept": [s.to_dict() for s in kept],
                "discarded": [s.to_dict() for s in discarded], "cost": cost}

    def _summaries(self) -> tuple[list[ClusterSummary], list[ClusterSummary]]:
        s = self.load("04_summaries")
        return ([ClusterSummary.from_dict(d) for d in s["kept"]],
                [ClusterSummary.from_dict(d) for d in s["discarded"]])

    def _stage_refined(self) -> dict:
        ids, _, doc_emb = self._vectors()
        kept, _ = self._summaries()
        if not kept:
            raise ArgumentError("every cluster was judged incoherent; nothing to refine")
        summ_emb = self.embedder.embed_texts([s.summary for s in kept])
        summ_emb = np.asarray(store.normalize(summ_emb), dtype=float)
        grid_taus = [float(t) for t in self.config.get("refine.tau_grid")]
        try:
            grid = grid_search_threshold(kept, summ_emb, doc_emb, ids, grid_taus)
            note = ""
        except SelectionError as exc:
            grid = exc.grid if hasattr(exc, "grid") else ThresholdGrid([], None, str(exc))
            note = str(exc)
        override = self.config.get("refine.tau")
        if override is not None:
            tau, source = float(override), "override"
        elif grid.selected is not None:
            tau, source = float(grid.selected), "grid"
        else:
            tau, source = float(self.config.get("refine.fallback_tau")), "fallback"
            logger.warning("threshold selection failed (%s); using tau %.2f", note, tau)
        refined, cost = self._judge_stage(lambda j: merge_redundant(kept, summ_emb, tau, j))
        return {"tau": tau, "tau_source": source, "selection_note": note,
                "threshold_grid": grid.to_dict(),
                "summary_embeddings": {str(s.cluster_id): v for s, v in zip(kept, summ_emb)},
                "refined": refined.to_dict(), "cost": cost}

    def _stage_labels(self) -> dict:
        refined = RefinedStructure.from_dict(self.load("05_refined")["refined"])
        label_tau = float(self.config.get("refine.label_tau"))
        labelled, cost = self._judge_stage(lambda j: ground_labels(refined, j, self.embedder, label_tau))
        return {"refined": labelled.to_dict(), "cost": cost}

    def _labels(self) -> RefinedStructure:
        return RefinedStructure.from_dict(self.load("06_labels")["refined"])

    def _stage_assignments(self) -> dict:
        corpus = _corpus_from_stage(self.load("01_corpus"))
        refined = self._labels()
        result, cost = self._judge_stage(lambda j: assign_corpus(corpus, refined.labels, j))
        return {"labels": refined.labels, "assignments": result.assignments, "errors": result.errors,
                "counts": result.counts(), "cost": cost}

    def _stage_report(self) -> dict:
        ids, reduced, doc_emb = self._vectors()
        proposal = self._proposal()
        kept, discarded = self._summaries()
        refined_stage = self.load("05_refined")
        tau = float(refined_stage["tau"])
        refined = self._labels()
        assigned = self.load("07_assignments")
        space = self.config.get("refine.evaluation_space")
        points = reduced if space == "svd" else doc_emb

        partitions = {
            "hdbscan": proposal.labels,
            "embedding_only": merge_by_centroids(proposal, doc_emb, tau),
            "refined": refined.document_labels(ids),
        }
        quality = {m: quality_report(points, partitions[m], doc_emb) for m in METHODS}
        coherence = {m: [quality[m].intra_coherence[k] for k in sorted(quality[m].intra_coherence)]
                     for m in METHODS}
        stage_costs = {s: self.load(s).get("cost", 0.0)
                       for s in ("04_summaries", "05_refined", "06_labels", "07_assignments")}
        counts = assigned["counts"]
        return {
            "documents": len(ids),
            "evaluation_space": space,
            "proposal": {"clusters": proposal.cluster_count, "dbcv": proposal.dbcv,
                         "noise": int(np.sum(proposal.labels == -1)),
                         "config": proposal.config.to_dict()},
            "coherence_filter": {"kept": [s.cluster_id for s in kept],
                                 "discarded": [s.cluster_id for s in discarded]},
            "tau": tau,
            "tau_source": refined_stage["tau_source"],
            "threshold_grid": refined_stage["threshold_grid"]["rows"],
            "label_tau": refined.label_tau,
            "labels": refined.labels,
            "label_count": len(refined.labels),
            "assignment_counts": counts,
            "none_of_the_above": counts.get(NONE_OF_THE_ABOVE, 0),
            "unassigned": counts.get(UNASSIGNED, 0),
            "methods": {m: quality[m].to_dict() for m in METHODS},
            "statistics": compare_methods(coherence),
            "provider": {"model": self.judge.model, "stage_costs": stage_costs,
                         "cost": math.fsum(stage_costs.values())},
        }

    # -- auxiliary outputs (not stages) --

    def temporal(self) -> dict:
        """Densest-window and balanced theme x platform analysis; written to temporal.json."""
        manifest = store.read_manifest(self.run_dir)
        for s in ("01_corpus", "07_assignments"):
            if manifest["stages"][s]["status"] != store.DONE:
                raise StageOrderError(f"temporal needs stage {s} to be completed first")
        corpus = _corpus_from_stage(self.load("01_corpus"))
        assigned = self.load("07_assignments")
        assignments = assigned["assignments"]
        ref_name = self.config.get("temporal.reference_platform")
        days = int(self.config.get("temporal.window_days"))
        seed = int(self.config.get("temporal.seed"))
        by_platform: dict[str, list[int]] = {}
        for i, d in enumerate(corpus):
            by_platform.setdefault(d.platform, []).append(i)
        if ref_name not in by_platform:
            raise ArgumentError(f"no documents from reference platform {ref_name!r}")
        ref = corpus.subset(by_platform[ref_name], f"platform {ref_name}")
        window = densest_window(ref, days)
        ref_window = restrict_to_window(ref, window)
        universe = label_universe(assigned["labels"]) + [UNASSIGNED]
        out = {"reference_platform": ref_name, "window": window.to_dict(),
               "theme_month_correlation": theme_month_correlations(ref, assignments, assigned["labels"]),
               "comparisons": {}}
        for name in sorted(by_platform):
            if name == ref_name:
                continue
            other = corpus.subset(by_platform[name], f"platform {name}")
            if len(ref_window) == 0:
                out["comparisons"][name] = {"error": "reference window holds no documents"}
                continue
            a, b = match_volume(ref_window, other, seed)
            table = theme_platform_table([assignments[d] for d in a.ids], [assignments[d] for d in b.ids],
                                         universe, (ref_name, name))
            entry = {"sizes": [len(a), len(b)], "table": table.to_dict()}
            try:
                entry["chi_square"] = chi_square_independence(table.counts).to_dict()
            except ArgumentError as exc:
                entry["chi_square"] = {"error": str(exc)}
            out["comparisons"][name] = entry
        store.atomic_write_text(self.run_dir / "temporal.json", store.dumps(out))
        return out

    def export(self, what: str) -> list[Path]:
        out_dir = self.run_dir / "exports"
        written = []
        manifest = store.read_manifest(self.run_dir)

        def done(s):
            return manifest["stages"][s]["status"] == store.DONE

        if what == "coords":
            if not done("02_vectors"):
                raise StageOrderError("export coords needs stage 02_vectors")
            ids, reduced, _ = self._vectors()
            cluster = self._proposal().labels if done("03_clusters") else None
            labels = self.load("07_assignments")["assignments"] if done("07_assignments") else None
            lines = ["id\tx\ty\tcluster\tlabel"]
            for i, doc_id in enumerate(ids):
                c = "" if cluster is None else str(int(cluster[i]))
                lab = "" if labels is None else labels.get(doc_id, "")
                lines.append(f"{doc_id}\t{reduced[i, 0]:.9g}\t{reduced[i, 1]:.9g}\t{c}\t{lab}")
            written.append(out_dir / "coords.tsv")
            store.atomic_write_text(written[-1], "\n".join(lines) + "\n")
        elif what == "grid":
            if done("03_clusters"):
                rows = self.load("03_clusters")["grid"]
                lines = ["min_cluster_size\tmin_samples\tdbcv\tclusters\terror"]
                lines += [f"{r['min_cluster_size']}\t{r['min_samples']}\t{r['dbcv']:.9g}\t"
                          f"{'' if r['cluster_count'] is None else r['cluster_count']}\t{r['error'] or ''}"
                          for r in rows]
                written.append(out_dir / "clustering_grid.tsv")
                store.atomic_write_text(written[-1], "\n".join(lines) + "\n")
            if done("05_refined"):
                g = self.load("05_refined")["threshold_grid"]
                written.append(out_dir / "threshold_grid.tsv")
                store.atomic_write_text(written[-1], ThresholdGrid(g["rows"], g["selected"]).to_tsv())
            if not written:
                raise StageOrderError("export grid needs stage 03_clusters or 05_refined")
        elif what == "report":
            if not done("08_report"):
                raise StageOrderError("export report needs stage 08_report")
            written.append(out_dir / "summary.tsv")
            store.atomic_write_text(written[-1], summary_table(self.load("08_report")))
        else:
            raise ArgumentError(f"unknown export {what!r}")
        return written


def _fmt(v) -> str:
    if v is None:
        return "NA"
    if isinstance(v, float):
        return f"{v:.4f}"
    return str(v)


def summary_table(report: dict) -> str:
    """Tab-separated C / S / DB per method plus the run-level figures."""
    lines = ["method\tC\tS\tDB"]
    for m in METHODS:
        q = report["methods"][m]
        lines.append(f"{m}\t{q['C']}\t{_fmt(q['S'])}\t{_fmt(q['DB'])}")
    lines.append("")
    lines.append(f"selected tau\t{_fmt(report['tau'])} ({report['tau_source']})")
    lines.append(f"labels\t{report['label_count']}")
    lines.append(f"provider cost\t{report['provider']['cost']:.6f}")
    return "\n".join(lines) + "\n"
