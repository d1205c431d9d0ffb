"""Embedding post-processing: aggregation, batch correction and transform pipelines."""

# Explicit exports for easier importing
from phenom.processors.aggregation import aggregate_well, perturbation_embeddings, shift_origin_to_controls, spherical_mean
from phenom.processors.embeddings import EmbeddingRecord, EmbeddingTable
from phenom.processors.normalizer import center_by, pca_transform, standardize_by
from phenom.processors.pipeline import register_transform, run_pipeline
from phenom.processors.tvn import TVNModel, apply_tvn, fit_tvn

__all__ = [
    "EmbeddingRecord",
    "EmbeddingTable",
    "TVNModel",
    "aggregate_well",
    "apply_tvn",
    "center_by",
    "fit_tvn",
    "pca_transform",
    "perturbation_embeddings",
    "register_transform",
    "run_pipeline",
    "shift_origin_to_controls",
    "spherical_mean",
    "standardize_by",
]
