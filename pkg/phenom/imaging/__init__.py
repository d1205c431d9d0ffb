"""Image types, preprocessing and the synthetic screen generator."""

from phenom.imaging.preprocessing import (
    augment_flips,
    center_crop,
    random_crop,
    self_standardize,
    tile_image,
)
from phenom.imaging.synthetic import SynthConfig, SyntheticPlateGenerator, generate_synthetic_dataset
from phenom.imaging.well_image import NEG_CONTROL, Crop, WellImage

__all__ = [
    "NEG_CONTROL",
    "Crop",
    "WellImage",
    "SynthConfig",
    "SyntheticPlateGenerator",
    "generate_synthetic_dataset",
    "augment_flips",
    "center_crop",
    "random_crop",
    "self_standardize",
    "tile_image",
]
