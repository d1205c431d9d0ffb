"""Shared fixtures: tiny model configs, synthetic wells and embedding tables."""

from typing import Callable, List

import numpy as np
import pandas as pd
import pytest
import torch

from phenom.imaging.synthetic import SynthConfig, generate_synthetic_dataset
from phenom.imaging.well_image import NEG_CONTROL, Crop, WellImage
from phenom.models.config import ViTConfig
from phenom.processors.embeddings import EmbeddingTable
from phenom.training.config import TrainConfig


@pytest.fixture
def tiny_config() -> ViTConfig:
    """depth 2, width 64, 4 heads, P=8, S=64, 6 channels."""
    return ViTConfig.preset("tiny-test")


@pytest.fixture
def small_config() -> ViTConfig:
    """A tiny-test ViT on 16 x 16 crops, for the slower property checks."""
    return ViTConfig.preset("tiny-test", img_size=16, patch_size=4, width=32, heads=4,
                            decoder_width=16, decoder_heads=2)


@pytest.fixture
def synth_config() -> SynthConfig:
    return SynthConfig(
        n_genes=6,
        n_replicates_per_gene=2,
        n_plates=1,
        n_experiments=2,
        n_controls_per_plate=3,
        image_size=32,
        relationship_blocks=[[0, 1, 2]],
        seed=7,
    )


@pytest.fixture
def synth_images(synth_config):
    images, _ = generate_synthetic_dataset(synth_config)
    return images


@pytest.fixture
def train_config() -> TrainConfig:
    return TrainConfig(batch_size=4, epochs=2, max_lr=1e-3, seed=3, augment=True)


@pytest.fixture
def make_crop() -> Callable[..., Crop]:
    def factory(size: int = 64, channels: int = 6, seed: int = 0) -> Crop:
        rng = np.random.default_rng(seed)
        return Crop(pixels=rng.standard_normal((size, size, channels)).astype(np.float32), standardized=True)

    return factory


@pytest.fixture
def make_well() -> Callable[..., WellImage]:
    def factory(pixels: np.ndarray, perturbation_id: str = "gene_0000", well_id: str = "w0",
                plate_id: str = "p0", experiment_id: str = "e0") -> WellImage:
        pixels = np.asarray(pixels, dtype=np.float32)
        if pixels.ndim == 2:
            pixels = pixels[:, :, None]
        return WellImage(
            pixels=pixels,
            channel_names=[f"ch{i}" for i in range(pixels.shape[2])],
            well_id=well_id,
            plate_id=plate_id,
            experiment_id=experiment_id,
            perturbation_id=perturbation_id,
        )

    return factory


@pytest.fixture
def make_table() -> Callable[..., EmbeddingTable]:
    """
    Table from a vector matrix and per-row perturbation ids; plates cycle
    over ``n_plates`` and every row is its own well.
    """

    def factory(vectors: np.ndarray, perturbations: List[str], n_plates: int = 1,
                experiments: List[str] = None) -> EmbeddingTable:
        n = len(perturbations)
        metadata = pd.DataFrame({
            "well_id": [f"w{i:04d}" for i in range(n)],
            "plate_id": [f"p{i % n_plates}" for i in range(n)],
            "experiment_id": experiments or ["e0"] * n,
            "perturbation_id": list(perturbations),
        })
        return EmbeddingTable(metadata=metadata, vectors=np.asarray(vectors, dtype=np.float64))

    return factory


@pytest.fixture
def control_id() -> str:
    return NEG_CONTROL


@pytest.fixture(autouse=True)
def _torch_threads():
    torch.set_num_threads(1)
    yield
