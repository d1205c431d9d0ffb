"""Weakly supervised ViT classifier: perturbation labels from the class token."""

from typing import Tuple

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from phenom.core.exceptions import ChannelMismatchError, InvalidLabelError
from phenom.core.logger import PhenomLogger
from phenom.imaging.well_image import Crop
from phenom.models.config import ViTConfig
from phenom.models.patching import patchify_tensor
from phenom.models.vit import ViTEncoder, init_weights

logger = PhenomLogger.get_logger(__name__)


class ViTClassifier(nn.Module):
    """
    ViT encoder plus a linear head on the final-layer class token. The
    class-token state doubles as the image embedding.
    """

    def __init__(self, config: ViTConfig, n_classes: int):
        super().__init__()
        if n_classes < 1:
            raise InvalidLabelError(f"n_classes must be positive, got {n_classes}")
        self.config = config
        self.n_classes = n_classes
        self.encoder = ViTEncoder(config, config.patch_size ** 2 * config.in_chans)
        self.head = nn.Linear(config.width, n_classes)
        torch.nn.init.normal_(self.encoder.cls_token, std=0.02)
        self.apply(init_weights)

    def forward(self, imgs: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        if imgs.shape[1] != self.config.in_chans:
            raise ChannelMismatchError(
                f"Model was built for {self.config.in_chans} channels, input has {imgs.shape[1]}"
            )
        states = self.encoder(patchify_tensor(imgs, self.config.patch_size))
        class_embedding = states[:, 0, :]
        return self.head(class_embedding), class_embedding

    def embed(self, imgs: torch.Tensor) -> torch.Tensor:
        return self.forward(imgs)[1]


def build_classifier(config: ViTConfig, n_classes: int, seed: int = 0) -> ViTClassifier:
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        model = ViTClassifier(config, n_classes)
    logger.info(f"Built WSL ViT-{config.variant}/{config.patch_size} with {n_classes} classes")
    return model


def classification_loss(logits: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    n_classes = logits.shape[-1]
    if labels.numel() and (labels.min() < 0 or labels.max() >= n_classes):
        raise InvalidLabelError(f"Labels must lie in [0, {n_classes}), got range "
                                f"[{int(labels.min())}, {int(labels.max())}]")
    return F.cross_entropy(logits, labels)


def wsl_forward(crop: Crop, model: ViTClassifier, n_classes: int) -> Tuple[np.ndarray, np.ndarray]:
    """Logits and final class-token embedding for one crop."""
    if n_classes != model.n_classes:
        raise InvalidLabelError(f"Model has {model.n_classes} classes, caller expects {n_classes}")
    imgs = crop.to_tensor(next(model.parameters()).dtype).unsqueeze(0)
    with torch.no_grad():
        logits, embedding = model(imgs)
    return logits[0].cpu().numpy(), embedding[0].cpu().numpy()
