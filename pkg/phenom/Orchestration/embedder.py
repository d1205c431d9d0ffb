"""
Well embedding: tile each well into model-sized crops, embed every crop,
average crops into one well vector. Baselines skip the model.
"""

from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional, Sequence

import numpy as np
import torch
import torch.nn as nn

from phenom.core.exceptions import InvalidConfigError
from phenom.core.logger import PhenomLogger
from phenom.imaging.features import pixel_statistics_embedding
from phenom.imaging.preprocessing import tile_image
from phenom.imaging.well_image import WellImage, stack_crops
from phenom.models.ca_mae import ChannelAgnosticMAE, EmbedMode
from phenom.processors.aggregation import aggregate_well
from phenom.processors.embeddings import EmbeddingRecord, EmbeddingTable

logger = PhenomLogger.get_logger(__name__)

BASELINES = ("pixel_stats", "random")


class WellEmbedder:
    """
    Either ``model`` or ``baseline`` must be given. For models, crops are
    the model's input size; images must tile exactly.
    """

    def __init__(
        self,
        model: Optional[nn.Module] = None,
        baseline: Optional[str] = None,
        mode: EmbedMode = EmbedMode.MEAN_ALL,
        seed: int = 0,
        workers: int = 1,
        random_dim: int = 1024,
    ):
        if (model is None) == (baseline is None):
            raise InvalidConfigError("Give exactly one of a model checkpoint or a baseline")
        if baseline is not None and baseline not in BASELINES:
            raise InvalidConfigError(f"Unknown baseline {baseline!r}; expected one of {BASELINES}")
        self.model = model.eval() if model is not None else None
        self.baseline = baseline
        self.mode = EmbedMode(mode)
        self.seed = seed
        self.workers = max(1, workers)
        self.random_dim = random_dim

    @torch.no_grad()
    def _model_embedding(self, image: WellImage) -> np.ndarray:
        crops = tile_image(image, self.model.config.img_size)
        imgs = stack_crops(crops, next(self.model.parameters()).dtype)
        if isinstance(self.model, ChannelAgnosticMAE):
            per_crop = self.model.embed(imgs, self.mode)
        else:
            per_crop = self.model.embed(imgs)
        return aggregate_well(list(per_crop.cpu().numpy()))

    def embed_well(self, image: WellImage, index: int = 0) -> np.ndarray:
        if self.baseline == "pixel_stats":
            return pixel_statistics_embedding(image).astype(np.float64)
        if self.baseline == "random":
            return np.random.default_rng([self.seed, index]).standard_normal(self.random_dim)
        return self._model_embedding(image)

    def embed_dataset(self, images: Sequence[WellImage]) -> EmbeddingTable:
        images = list(images)
        with ThreadPoolExecutor(max_workers=self.workers) as pool:
            vectors: List[np.ndarray] = list(pool.map(self.embed_well, images, range(len(images))))
        records = [
            EmbeddingRecord(
                vector=v,
                well_id=im.well_id,
                plate_id=im.plate_id,
                experiment_id=im.experiment_id,
                perturbation_id=im.perturbation_id,
            )
            for v, im in zip(vectors, images)
        ]
        source = self.baseline or type(self.model).__name__
        logger.info(f"Embedded {len(records)} wells with {source}: dimension {len(vectors[0])}")
        return EmbeddingTable.from_records(records)
