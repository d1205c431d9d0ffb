"""
Feature table CSV: a ``well_id`` column followed by one column per feature.
"""

from pathlib import Path

import pandas as pd

from phenom.benchmarks.feature_regression import FeatureTable
from phenom.core.exceptions import FormatError
from phenom.core.logger import PhenomLogger

logger = PhenomLogger.get_logger(__name__)


class FeatureDAO:
    """Reads and writes well feature tables."""

    @staticmethod
    def write(features: FeatureTable, path: Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        frame = features.frame.copy()
        frame.index.name = "well_id"
        frame.to_csv(path, lineterminator="\n")
        logger.info(f"Wrote {len(frame)} x {frame.shape[1]} feature table to {path}")
        return path

    @staticmethod
    def read(path: Path) -> FeatureTable:
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"Feature table not found: {path}")
        frame = pd.read_csv(path, dtype={"well_id": str})
        if "well_id" not in frame.columns:
            raise FormatError(f"{path}: missing well_id column")
        try:
            return FeatureTable(frame.set_index("well_id").astype(float))
        except ValueError as e:
            raise FormatError(f"{path}: {e}") from e
