"""
Hand-engineered well features.

``measure_features`` is a small CellProfiler-style profile (AreaShape,
Intensity, Neighbors, RadialDistribution, Texture) used as regression
targets. ``pixel_statistics_embedding`` is the pixel-intensity baseline
embedding: five statistics per channel.
"""

from typing import Dict, List

import numpy as np
from scipy import ndimage

from phenom.imaging.well_image import WellImage

FEATURE_CATEGORIES = ("AreaShape", "Intensity", "Neighbors", "RadialDistribution", "Texture")


def _foreground(channel: np.ndarray) -> np.ndarray:
    return channel > channel.mean() + channel.std()


def measure_features(image: WellImage) -> Dict[str, float]:
    """
    Per-well feature vector; names are ``<Category>_<measure>_<channel>``.
    """
    features: Dict[str, float] = {}
    h, w = image.height, image.width
    yy, xx = np.mgrid[0:h, 0:w]
    for c, name in enumerate(image.channel_names):
        channel = image.pixels[:, :, c].astype(np.float64)
        mask = _foreground(channel)
        labels, n_objects = ndimage.label(mask)
        area_fraction = float(mask.mean())
        mean_area = float(mask.sum() / n_objects) if n_objects else 0.0

        features[f"AreaShape_AreaFraction_{name}"] = area_fraction
        features[f"AreaShape_MeanObjectArea_{name}"] = mean_area

        features[f"Intensity_Mean_{name}"] = float(channel.mean())
        features[f"Intensity_Std_{name}"] = float(channel.std())
        features[f"Intensity_MaxIntegrated_{name}"] = float(channel[mask].sum()) if mask.any() else 0.0

        features[f"Neighbors_ObjectCount_{name}"] = float(n_objects)
        if n_objects > 1:
            centers = np.array(ndimage.center_of_mass(mask, labels, range(1, n_objects + 1)))
            diffs = centers[:, None, :] - centers[None, :, :]
            dists = np.sqrt((diffs ** 2).sum(-1))
            np.fill_diagonal(dists, np.inf)
            features[f"Neighbors_NearestDistance_{name}"] = float(dists.min(axis=1).mean())
        else:
            features[f"Neighbors_NearestDistance_{name}"] = float(max(h, w))

        # Fraction of intensity within the inner half-radius of the field
        radius = np.sqrt((yy - h / 2.0) ** 2 + (xx - w / 2.0) ** 2)
        total = channel.sum()
        inner = channel[radius < min(h, w) / 4.0].sum()
        features[f"RadialDistribution_InnerFraction_{name}"] = float(inner / total) if total > 0 else 0.0

        gy, gx = np.gradient(channel)
        features[f"Texture_GradientMean_{name}"] = float(np.sqrt(gx ** 2 + gy ** 2).mean())
        lap = ndimage.laplace(channel)
        features[f"Texture_LaplacianVar_{name}"] = float(lap.var())
    return features


def feature_category(column: str) -> str:
    category = column.split("_", 1)[0]
    if category not in FEATURE_CATEGORIES:
        raise ValueError(f"Feature column {column} has unknown category {category}")
    return category


PIXEL_STATISTICS: List[str] = ["mean", "std", "p05", "p50", "p95"]


def pixel_statistics_embedding(image: WellImage) -> np.ndarray:
    """Five intensity statistics per channel (30 values for 6 channels)."""
    x = image.pixels.reshape(-1, image.n_channels).astype(np.float64)
    stats = [
        x.mean(axis=0),
        x.std(axis=0),
        np.percentile(x, 5, axis=0),
        np.percentile(x, 50, axis=0),
        np.percentile(x, 95, axis=0),
    ]
    return np.stack(stats, axis=1).reshape(-1).astype(np.float32)
