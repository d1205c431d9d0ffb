"""
Aggregation of embeddings: crops to wells, replicates to perturbations.
"""

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np

from phenom.core.exceptions import DimensionMismatchError, EmptyInputError, UndefinedMeanError
from phenom.core.logger import PhenomLogger
from phenom.processors.embeddings import EmbeddingTable

logger = PhenomLogger.get_logger(__name__)

# Below this norm a normalized replicate sum is treated as cancelled out
UNDEFINED_NORM = 1e-9


def _stack(vectors: Sequence[np.ndarray], what: str) -> np.ndarray:
    if len(vectors) == 0:
        raise EmptyInputError(f"Cannot aggregate zero {what}")
    lengths = {np.shape(v) for v in vectors}
    if len(lengths) != 1:
        raise DimensionMismatchError(f"{what} have different shapes: {sorted(lengths)}")
    return np.stack([np.asarray(v, dtype=np.float64) for v in vectors])


def aggregate_well(crop_embeddings: Sequence[np.ndarray]) -> np.ndarray:
    """Arithmetic mean of a well's crop embeddings."""
    return _stack(crop_embeddings, "crop embeddings").mean(axis=0)


def spherical_mean(replicates: Sequence[np.ndarray]) -> np.ndarray:
    """
    Normalize each replicate to unit length, average, and renormalize.

    Raises:
        UndefinedMeanError: a replicate is the zero vector, or the normalized
            replicates cancel (e.g. {v, -v})
    """
    x = _stack(replicates, "replicates")
    norms = np.linalg.norm(x, axis=1)
    if np.any(norms == 0.0):
        raise UndefinedMeanError("Spherical mean is undefined for a zero-vector replicate")
    mean = (x / norms[:, None]).mean(axis=0)
    length = np.linalg.norm(mean)
    if length < UNDEFINED_NORM:
        raise UndefinedMeanError(f"Replicates cancel out (normalized mean norm {length:.3e})")
    return mean / length


def control_mean(table: EmbeddingTable) -> np.ndarray:
    mask = table.control_mask
    if not mask.any():
        raise EmptyInputError("Table has no negative-control wells")
    return table.vectors[mask].mean(axis=0)


def shift_origin_to_controls(table: EmbeddingTable, neg_control_mean: Optional[np.ndarray] = None) -> EmbeddingTable:
    """Subtract the negative-control mean from every vector."""
    if neg_control_mean is None:
        neg_control_mean = control_mean(table)
    neg_control_mean = np.asarray(neg_control_mean, dtype=np.float64)
    if neg_control_mean.shape != (table.dim,):
        raise DimensionMismatchError(
            f"Control mean has shape {neg_control_mean.shape}, table dimension is {table.dim}"
        )
    return table.with_vectors(table.vectors - neg_control_mean)


@dataclass(frozen=True)
class PerturbationMatrix:
    """One unit vector per non-control perturbation, rows sorted by id."""

    ids: List[str]
    vectors: np.ndarray

    @property
    def index(self) -> Dict[str, int]:
        return {pid: i for i, pid in enumerate(self.ids)}


def perturbation_embeddings(table: EmbeddingTable, shift_to_controls: bool = True) -> PerturbationMatrix:
    """
    Perturbation representations for relationship recall: optionally move
    the origin to the control mean, then take the spherical mean of each
    perturbation's wells. Controls are dropped.
    """
    if shift_to_controls:
        table = shift_origin_to_controls(table)
    treated = table.subset(~table.control_mask)
    if len(treated) == 0:
        raise EmptyInputError("Table has no perturbation wells")
    ids, vectors = [], []
    groups = treated.metadata.groupby("perturbation_id").indices
    for pid in sorted(groups):
        ids.append(pid)
        vectors.append(spherical_mean(list(treated.vectors[groups[pid]])))
    logger.info(f"Aggregated {len(treated)} wells into {len(ids)} perturbation embeddings")
    return PerturbationMatrix(ids=ids, vectors=np.stack(vectors))
