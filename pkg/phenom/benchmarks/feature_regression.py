"""
Linear probes from embeddings to hand-engineered features.

Each feature column gets its own elastic-net regressor: L1 ratios
(0.1, 0.6, 0.9, 0.95, 0.99), penalty path chosen from the data, 5-fold
cross-validation, refit on the full training split. Scores are test R²
per feature and median ± MAD per feature category.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.stats import median_abs_deviation, skew
from sklearn.linear_model import ElasticNetCV
from sklearn.metrics import r2_score
from sklearn.model_selection import KFold
from sklearn.preprocessing import StandardScaler

from phenom.core.exceptions import DimensionMismatchError, EmptyInputError
from phenom.core.logger import PhenomLogger
from phenom.imaging.features import FEATURE_CATEGORIES, feature_category, measure_features
from phenom.imaging.well_image import WellImage

logger = PhenomLogger.get_logger(__name__)

L1_RATIOS = (0.1, 0.6, 0.9, 0.95, 0.99)
N_FOLDS = 5
SKEW_THRESHOLD = 0.5


@dataclass
class FeatureTable:
    """
    Well x feature matrix. Columns are ``<Category>_<measure>_<channel>``
    with Category one of the five CellProfiler families.
    """

    frame: pd.DataFrame
    transforms: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        for column in self.frame.columns:
            feature_category(column)
        if not np.all(np.isfinite(self.frame.to_numpy(dtype=np.float64))):
            raise DimensionMismatchError("Feature table contains non-finite values")

    @classmethod
    def from_images(cls, images: Sequence[WellImage]) -> "FeatureTable":
        rows = {image.well_id: measure_features(image) for image in images}
        frame = pd.DataFrame.from_dict(rows, orient="index")
        frame.index.name = "well_id"
        return cls(frame)

    def __len__(self) -> int:
        return len(self.frame)

    @property
    def columns(self) -> List[str]:
        return list(self.frame.columns)

    @property
    def categories(self) -> Dict[str, str]:
        return {c: feature_category(c) for c in self.frame.columns}

    def values(self) -> np.ndarray:
        return self.frame.to_numpy(dtype=np.float64)

    def align(self, well_ids: Sequence[str]) -> "FeatureTable":
        """Rows reordered to ``well_ids``."""
        missing = set(well_ids) - set(self.frame.index)
        if missing:
            raise DimensionMismatchError(f"No features for wells {sorted(missing)[:5]}")
        return FeatureTable(self.frame.loc[list(well_ids)], dict(self.transforms))


def skew_transform(features: FeatureTable) -> FeatureTable:
    """
    Per column: log if skewness > 0.5 (after shifting to min 1 when any
    value is <= 0), square if skewness < -0.5, otherwise unchanged; then
    center and scale to unit variance. Constant columns become zeros.
    """
    out = {}
    transforms = {}
    for column in features.frame.columns:
        x = features.frame[column].to_numpy(dtype=np.float64)
        if np.ptp(x) == 0.0:
            out[column] = np.zeros_like(x)
            transforms[column] = "constant"
            continue
        s = skew(x)
        if s > SKEW_THRESHOLD:
            if x.min() <= 0.0:
                x = x - x.min() + 1.0
            x = np.log(x)
            transforms[column] = "log"
        elif s < -SKEW_THRESHOLD:
            x = x ** 2
            transforms[column] = "square"
        else:
            transforms[column] = "identity"
        std = x.std()
        out[column] = (x - x.mean()) / std if std > 0 else x - x.mean()
    frame = pd.DataFrame(out, index=features.frame.index)
    return FeatureTable(frame, transforms)


@dataclass
class RegressionReport:
    r2: Dict[str, float]
    category_summary: Dict[str, Tuple[float, float]]
    l1_ratio: Dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Dict]:
        return {
            "r2": self.r2,
            "category_median_r2": {k: {"median": m, "mad": d} for k, (m, d) in self.category_summary.items()},
        }


def _as_matrix(features) -> Tuple[np.ndarray, List[str]]:
    if isinstance(features, FeatureTable):
        return features.values(), features.columns
    matrix = np.asarray(features, dtype=np.float64)
    if matrix.ndim == 1:
        matrix = matrix[:, None]
    return matrix, [f"feature_{i}" for i in range(matrix.shape[1])]


def fit_feature_regressors(
    train_embeddings: np.ndarray,
    train_features,
    test_embeddings: np.ndarray,
    test_features,
    seed: int = 0,
    workers: int = 1,
) -> RegressionReport:
    """
    Args:
        train_embeddings: N_train x D
        train_features: FeatureTable or N_train x F array
        test_embeddings: N_test x D, from experiments disjoint from training
        test_features: Same columns as ``train_features``
        seed: Fold shuffling seed
        workers: Threads across feature columns

    Raises:
        EmptyInputError: fewer than 5 training rows
        DimensionMismatchError: row or column counts disagree
    """
    x_train = np.asarray(train_embeddings, dtype=np.float64)
    x_test = np.asarray(test_embeddings, dtype=np.float64)
    y_train, columns = _as_matrix(train_features)
    y_test, test_columns = _as_matrix(test_features)

    if x_train.shape[0] < N_FOLDS:
        raise EmptyInputError(f"Need at least {N_FOLDS} training rows, got {x_train.shape[0]}")
    if x_train.shape[0] != y_train.shape[0] or x_test.shape[0] != y_test.shape[0]:
        raise DimensionMismatchError("Embedding and feature row counts differ")
    if x_train.shape[1] != x_test.shape[1]:
        raise DimensionMismatchError(f"Train dimension {x_train.shape[1]} != test dimension {x_test.shape[1]}")
    if columns != test_columns:
        raise DimensionMismatchError(f"{len(columns)} train features vs {len(test_columns)} test features "
                                     f"(or different column names)")

    scaler = StandardScaler().fit(x_train)
    x_train, x_test = scaler.transform(x_train), scaler.transform(x_test)
    folds = KFold(n_splits=N_FOLDS, shuffle=True, random_state=seed)

    def fit_one(j: int) -> Tuple[float, float]:
        model = ElasticNetCV(l1_ratio=list(L1_RATIOS), eps=1e-4, cv=folds, max_iter=10000)
        model.fit(x_train, y_train[:, j])
        return float(r2_score(y_test[:, j], model.predict(x_test))), float(model.l1_ratio_)

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        results = list(pool.map(fit_one, range(y_train.shape[1])))

    r2 = {c: r for c, (r, _) in zip(columns, results)}
    by_category: Dict[str, List[float]] = {}
    for column, score in r2.items():
        category = column.split("_", 1)[0] if column.split("_", 1)[0] in FEATURE_CATEGORIES else "all"
        by_category.setdefault(category, []).append(score)
    summary = {
        cat: (float(np.median(scores)), float(median_abs_deviation(scores)))
        for cat, scores in sorted(by_category.items())
    }
    logger.info(f"Fitted {len(r2)} elastic-net probes on {x_train.shape[0]} wells; "
                + ", ".join(f"{k} {m:.3f}±{d:.3f}" for k, (m, d) in summary.items()))
    return RegressionReport(r2=r2, category_summary=summary,
                            l1_ratio={c: l for c, (_, l) in zip(columns, results)})
