"""
Embedding records and the table that holds them.

A table pairs a metadata frame (one row per well) with a float matrix of
well embeddings. Every transform returns a new table; inputs are never
mutated.
"""

from dataclasses import dataclass
from typing import Iterator, List

import numpy as np
import pandas as pd

from phenom.core.exceptions import DimensionMismatchError
from phenom.imaging.well_image import NEG_CONTROL

METADATA_COLUMNS = ["well_id", "plate_id", "experiment_id", "perturbation_id"]
GROUP_KEYS = {"plate": "plate_id", "experiment": "experiment_id"}


@dataclass(frozen=True)
class EmbeddingRecord:
    vector: np.ndarray
    well_id: str
    plate_id: str
    experiment_id: str
    perturbation_id: str


@dataclass(frozen=True)
class EmbeddingTable:
    """Well-level embeddings plus grouping metadata."""

    metadata: pd.DataFrame
    vectors: np.ndarray

    def __post_init__(self):
        if self.vectors.ndim != 2:
            raise DimensionMismatchError(f"Embedding matrix must be 2-D, got {self.vectors.shape}")
        if len(self.metadata) != self.vectors.shape[0]:
            raise DimensionMismatchError(
                f"{len(self.metadata)} metadata rows for {self.vectors.shape[0]} vectors"
            )
        missing = set(METADATA_COLUMNS) - set(self.metadata.columns)
        if missing:
            raise DimensionMismatchError(f"Metadata is missing columns {sorted(missing)}")
        if not np.all(np.isfinite(self.vectors)):
            raise DimensionMismatchError("Embedding matrix contains non-finite entries")

    @classmethod
    def from_records(cls, records: List[EmbeddingRecord]) -> "EmbeddingTable":
        if not records:
            raise DimensionMismatchError("Cannot build a table from zero records")
        metadata = pd.DataFrame(
            [{k: getattr(r, k) for k in METADATA_COLUMNS} for r in records],
            columns=METADATA_COLUMNS,
        )
        return cls(metadata=metadata, vectors=np.stack([np.asarray(r.vector) for r in records]))

    def __len__(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def records(self) -> Iterator[EmbeddingRecord]:
        for i, row in enumerate(self.metadata[METADATA_COLUMNS].itertuples(index=False)):
            yield EmbeddingRecord(self.vectors[i], *row)

    def with_vectors(self, vectors: np.ndarray) -> "EmbeddingTable":
        return EmbeddingTable(metadata=self.metadata.reset_index(drop=True), vectors=vectors)

    @property
    def control_mask(self) -> np.ndarray:
        return (self.metadata["perturbation_id"] == NEG_CONTROL).to_numpy()

    def subset(self, mask: np.ndarray) -> "EmbeddingTable":
        return EmbeddingTable(
            metadata=self.metadata[mask].reset_index(drop=True),
            vectors=self.vectors[mask],
        )
