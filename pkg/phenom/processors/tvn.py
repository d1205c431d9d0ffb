"""
Typical variation normalization: PCA whitening fitted on negative controls
and applied to every record.

    x -> ((x - mean) @ basis) / scale

``basis`` is the full D x D rotation of control principal axes and
``scale`` the per-component standard deviation (ddof=1), so the fitted
controls come out with zero mean and identity covariance.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import null_space
from sklearn.decomposition import PCA

from phenom.core.exceptions import DimensionMismatchError, EmptyInputError, RankDeficientError
from phenom.core.logger import PhenomLogger
from phenom.processors.embeddings import EmbeddingTable

logger = PhenomLogger.get_logger(__name__)

RIDGE_EPS = 1e-6
# Relative eigenvalue below which a direction counts as degenerate
RANK_TOL = 1e-10


@dataclass(frozen=True)
class TVNModel:
    mean: np.ndarray
    basis: np.ndarray
    scale: np.ndarray
    fitted_on: int

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def transform(self, vectors: np.ndarray) -> np.ndarray:
        vectors = np.asarray(vectors, dtype=np.float64)
        if vectors.ndim != 2 or vectors.shape[1] != self.dim:
            raise DimensionMismatchError(f"TVN fitted on dimension {self.dim}, got {vectors.shape}")
        return ((vectors - self.mean) @ self.basis) / self.scale


def fit_tvn(neg_controls: EmbeddingTable, ridge: bool = False) -> TVNModel:
    """
    Fit whitening on control records.

    A full-rank fit needs at least D + 1 controls with non-degenerate
    covariance. With ``ridge=True`` degenerate directions get scale 1e-6
    instead of raising.

    Raises:
        RankDeficientError: covariance is singular and ridge is off
    """
    x = np.asarray(neg_controls.vectors, dtype=np.float64)
    n, d = x.shape
    if n < 2:
        raise EmptyInputError(f"TVN needs at least 2 control records, got {n}")

    pca = PCA(n_components=min(n, d), svd_solver="full").fit(x)
    variances = pca.explained_variance_
    basis = pca.components_.T
    if basis.shape[1] < d:
        complement = null_space(pca.components_)
        basis = np.hstack([basis, complement[:, :d - basis.shape[1]]])
        variances = np.concatenate([variances, np.zeros(d - len(variances))])

    top = variances[0] if variances[0] > 0 else 1.0
    degenerate = variances <= RANK_TOL * top
    if degenerate.any() and not ridge:
        raise RankDeficientError(
            f"Control covariance has {int(degenerate.sum())} degenerate directions "
            f"({n} controls, dimension {d}); need >= {d + 1} controls in general position "
            f"or enable the ridge floor"
        )
    scale = np.maximum(np.sqrt(np.clip(variances, 0.0, None)), RIDGE_EPS)
    logger.info(f"Fitted TVN on {n} controls, dimension {d}"
                + (f", {int(degenerate.sum())} directions floored" if degenerate.any() else ""))
    return TVNModel(mean=pca.mean_.copy(), basis=basis, scale=scale, fitted_on=n)


def apply_tvn(model: TVNModel, table: EmbeddingTable) -> EmbeddingTable:
    return table.with_vectors(model.transform(table.vectors))


def tvn_on_controls(table: EmbeddingTable, ridge: bool = False, model: Optional[TVNModel] = None) -> EmbeddingTable:
    """Fit on the table's own negative controls (unless given a model) and whiten every record."""
    if model is None:
        controls = table.subset(table.control_mask)
        if len(controls) == 0:
            raise EmptyInputError("Table has no negative-control wells to fit TVN on")
        model = fit_tvn(controls, ridge=ridge)
    return apply_tvn(model, table)
