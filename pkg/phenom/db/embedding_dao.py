"""
Embedding table storage.

A table ``<stem>`` is three files:
    <stem>.csv   well_id, plate_id, experiment_id, perturbation_id, row_index
    <stem>.f32   rows x D float32 little-endian, row-major
    <stem>.json  {"rows": ..., "D": ..., "schema_version": ...}
"""

import json
from pathlib import Path

import numpy as np
import pandas as pd

from phenom.core.exceptions import FormatError
from phenom.core.logger import PhenomLogger
from phenom.processors.embeddings import METADATA_COLUMNS, EmbeddingTable

logger = PhenomLogger.get_logger(__name__)

SCHEMA_VERSION = "phenom.embeddings/v1"


def _paths(stem: Path):
    stem = Path(stem)
    if stem.suffix in {".csv", ".f32", ".json"}:
        stem = stem.with_suffix("")
    return stem.with_suffix(".csv"), stem.with_suffix(".f32"), stem.with_suffix(".json")


class EmbeddingDAO:
    """Bit-exact persistence of embedding tables."""

    @staticmethod
    def write(table: EmbeddingTable, stem: Path) -> Path:
        csv_path, matrix_path, header_path = _paths(stem)
        csv_path.parent.mkdir(parents=True, exist_ok=True)

        metadata = table.metadata[METADATA_COLUMNS].copy()
        metadata["row_index"] = np.arange(len(table))
        metadata.to_csv(csv_path, index=False, lineterminator="\n")

        matrix = np.ascontiguousarray(table.vectors, dtype="<f4")
        matrix_path.write_bytes(matrix.tobytes())
        header = {"rows": int(matrix.shape[0]), "D": int(matrix.shape[1]), "schema_version": SCHEMA_VERSION}
        header_path.write_text(json.dumps(header, sort_keys=True) + "\n", encoding="utf-8")

        logger.info(f"Wrote embedding table {csv_path.stem}: {matrix.shape[0]} rows x {matrix.shape[1]} dims")
        return csv_path.with_suffix("")

    @staticmethod
    def read(stem: Path) -> EmbeddingTable:
        csv_path, matrix_path, header_path = _paths(stem)
        for p in (csv_path, matrix_path, header_path):
            if not p.exists():
                raise FileNotFoundError(f"Embedding table file missing: {p}")

        header = json.loads(header_path.read_text(encoding="utf-8"))
        if header.get("schema_version") != SCHEMA_VERSION:
            raise FormatError(f"{header_path}: unsupported schema {header.get('schema_version')}")
        rows, dim = int(header["rows"]), int(header["D"])

        raw = matrix_path.read_bytes()
        if len(raw) != rows * dim * 4:
            raise FormatError(f"{matrix_path}: {len(raw)} bytes, expected {rows * dim * 4}")
        matrix = np.frombuffer(raw, dtype="<f4").reshape(rows, dim).astype(np.float32)

        metadata = pd.read_csv(csv_path, dtype=str, keep_default_na=False)
        if len(metadata) != rows:
            raise FormatError(f"{csv_path}: {len(metadata)} rows, header says {rows}")
        order = metadata["row_index"].astype(int).to_numpy()
        matrix = matrix[order]
        metadata = metadata[METADATA_COLUMNS].reset_index(drop=True)
        return EmbeddingTable(metadata=metadata, vectors=matrix)
