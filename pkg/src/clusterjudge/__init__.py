"""Density-based clustering of short social-media texts, refined by a chat-model judge.

Stages: ingest -> TF-IDF + truncated SVD -> HDBSCAN grid search scored by DBCV ->
coherence filtering -> redundancy merging -> label grounding -> assignment ->
evaluation. Every judge call goes through a cache and a usage ledger, and a
deterministic mock judge lets the whole pipeline run offline.
"""
from .corpus import Corpus, Document, cap_per_user, dedup_corpus, filter_keywords, load_corpus, save_corpus
from .density import ClusteringConfig, ClusterProposal, dbcv_score, grid_search_clustering, run_hdbscan
from .evaluate import (chi_square_independence, cohens_kappa, compare_methods, davies_bouldin,
                       kruskal_wallis, mann_whitney_u, pearson_r, quality_report, silhouette)
from .refine import (RefinedStructure, assign_corpus, coherence_filter, grid_search_threshold,
                     ground_labels, merge_redundant)
from .temporal import WindowSelection, densest_window, match_volume, theme_platform_table
from .vectorize import ReducedEmbedding, fit_tfidf, truncated_svd, vectorize

__version__ = "0.1.0"

__all__ = [
    "ClusterProposal", "ClusteringConfig", "Corpus", "Document", "ReducedEmbedding", "RefinedStructure",
    "WindowSelection", "assign_corpus", "cap_per_user", "chi_square_independence", "coherence_filter",
    "cohens_kappa", "compare_methods", "davies_bouldin", "dbcv_score", "dedup_corpus", "densest_window",
    "filter_keywords", "fit_tfidf", "grid_search_clustering", "grid_search_threshold", "ground_labels",
    "kruskal_wallis", "load_corpus", "mann_whitney_u", "match_volume", "merge_redundant", "pearson_r",
    "quality_report", "run_hdbscan", "save_corpus", "silhouette", "theme_platform_table", "truncated_svd",
    "vectorize",
]
