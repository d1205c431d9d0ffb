"""
Group-wise centering/standardization and PCA projection of embedding tables.
"""

from typing import Optional

import numpy as np
import pandas as pd
from sklearn.decomposition import PCA

from phenom.core.exceptions import DimensionMismatchError, InvalidConfigError
from phenom.core.logger import PhenomLogger
from phenom.processors.embeddings import GROUP_KEYS, EmbeddingTable

logger = PhenomLogger.get_logger(__name__)

STD_EPS = 1e-6


def _group_column(table: EmbeddingTable, group_key: str) -> pd.Series:
    column = GROUP_KEYS.get(group_key, group_key)
    if column not in table.metadata.columns:
        raise InvalidConfigError(
            f"Unknown group key {group_key!r}; expected one of {sorted(GROUP_KEYS)} or a metadata column"
        )
    return table.metadata[column].reset_index(drop=True)


def center_by(table: EmbeddingTable, group_key: str) -> EmbeddingTable:
    """Subtract each group's per-dimension mean."""
    groups = _group_column(table, group_key)
    frame = pd.DataFrame(table.vectors)
    centered = frame - frame.groupby(groups).transform("mean")
    logger.info(f"Centered {len(table)} records in {groups.nunique()} {group_key} groups")
    return table.with_vectors(centered.to_numpy())


def standardize_by(table: EmbeddingTable, group_key: str) -> EmbeddingTable:
    """
    Per group: subtract the mean and divide by the population std (floored
    at 1e-6). Every group needs at least two records.
    """
    groups = _group_column(table, group_key)
    sizes = groups.value_counts()
    small = sizes[sizes < 2]
    if len(small):
        raise DimensionMismatchError(
            f"standardize_by({group_key}) needs >= 2 records per group; undersized: {small.to_dict()}"
        )
    frame = pd.DataFrame(table.vectors)
    grouped = frame.groupby(groups)
    mean = grouped.transform("mean")
    std = grouped.transform(lambda col: col.std(ddof=0))
    out = (frame - mean) / np.maximum(std.to_numpy(), STD_EPS)
    logger.info(f"Standardized {len(table)} records in {len(sizes)} {group_key} groups")
    return table.with_vectors(out.to_numpy())


def pca_transform(table: EmbeddingTable, n_components: Optional[int] = None) -> EmbeddingTable:
    """
    Project onto the top principal components fitted on all records.
    Components come out in non-increasing explained-variance order.
    """
    limit = min(len(table), table.dim)
    k = table.dim if n_components is None else n_components
    if not 1 <= k <= limit:
        raise InvalidConfigError(f"n_components must be in [1, {limit}], got {k}")
    pca = PCA(n_components=k, svd_solver="full")
    projected = pca.fit_transform(table.vectors)
    logger.info(f"PCA kept {k}/{table.dim} components "
                f"({pca.explained_variance_ratio_.sum():.1%} of variance)")
    return table.with_vectors(projected)
