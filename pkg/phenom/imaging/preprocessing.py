"""
Crop preprocessing: channel-wise self-standardization, tiling, random
crops and flip augmentation.

All functions are pure given their seed arguments.
"""

from dataclasses import replace
from typing import List

import numpy as np

from phenom.core.exceptions import DimensionMismatchError
from phenom.core.logger import PhenomLogger
from phenom.imaging.well_image import Crop, WellImage

logger = PhenomLogger.get_logger(__name__)

STD_EPS = 1e-6


def self_standardize(crop: Crop) -> Crop:
    """
    Standardize each channel of a crop by its own mean and std.

    Constant channels become all zeros because the std is floored at 1e-6.
    Re-standardizing an already standardized crop is a no-op up to that floor.
    """
    x = crop.pixels.astype(np.float64)
    mean = x.mean(axis=(0, 1), keepdims=True)
    std = x.std(axis=(0, 1), keepdims=True)
    out = (x - mean) / np.maximum(std, STD_EPS)
    return replace(crop, pixels=out.astype(np.float32), standardized=True)


def _crop_at(image: WellImage, row: int, col: int, size: int) -> Crop:
    window = image.pixels[row:row + size, col:col + size, :]
    return Crop(
        pixels=np.array(window, dtype=np.float32, copy=True),
        provenance=(image.well_id, row, col),
        standardized=False,
        channel_names=list(image.channel_names),
    )


def tile_image(image: WellImage, crop_size: int) -> List[Crop]:
    """
    Cut a well image into non-overlapping crops in row-major order.

    Args:
        image: Source well image
        crop_size: Crop edge length S; must divide both H and W

    Returns:
        (H/S)·(W/S) self-standardized crops
    """
    if crop_size <= 0 or image.height % crop_size or image.width % crop_size:
        raise DimensionMismatchError(
            f"Image {image.height}x{image.width} is not divisible by crop size {crop_size}"
        )
    crops = []
    for row in range(0, image.height, crop_size):
        for col in range(0, image.width, crop_size):
            crops.append(self_standardize(_crop_at(image, row, col, crop_size)))
    return crops


def random_crop(image: WellImage, size: int, seed: int) -> Crop:
    """Uniformly placed, self-standardized crop. Deterministic given seed."""
    if size <= 0 or size > min(image.height, image.width):
        raise DimensionMismatchError(
            f"Crop size {size} does not fit image {image.height}x{image.width}"
        )
    rng = np.random.default_rng(seed)
    row = int(rng.integers(0, image.height - size + 1))
    col = int(rng.integers(0, image.width - size + 1))
    return self_standardize(_crop_at(image, row, col, size))


def center_crop(image: WellImage, size: int) -> Crop:
    """Self-standardized crop from the image center, used for validation."""
    if size <= 0 or size > min(image.height, image.width):
        raise DimensionMismatchError(
            f"Crop size {size} does not fit image {image.height}x{image.width}"
        )
    row = (image.height - size) // 2
    col = (image.width - size) // 2
    return self_standardize(_crop_at(image, row, col, size))


def augment_flips(crop: Crop, seed: int) -> Crop:
    """
    Apply a vertical flip (rows) and a horizontal flip (columns), each with
    probability 0.5. The channel axis is never touched.
    """
    rng = np.random.default_rng(seed)
    flip_vertical, flip_horizontal = rng.random(2) < 0.5
    pixels = crop.pixels
    if flip_vertical:
        pixels = pixels[::-1, :, :]
    if flip_horizontal:
        pixels = pixels[:, ::-1, :]
    return replace(crop, pixels=np.ascontiguousarray(pixels))
