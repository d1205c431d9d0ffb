"""ViT models: MAE, channel-agnostic MAE and the weakly supervised classifier."""

from phenom.models.ca_mae import ChannelAgnosticMAE, EmbedMode, build_ca_mae, ca_embed, ca_forward
from phenom.models.checkpoint import load_checkpoint, save_checkpoint
from phenom.models.classifier import ViTClassifier, build_classifier, wsl_forward
from phenom.models.config import ViTConfig
from phenom.models.losses import LossWeights, Reconstruction, loss_combined, loss_ft, loss_mae
from phenom.models.mae import MaskedAutoencoderViT, build_mae, extract_embedding, mae_forward

__all__ = [
    "ChannelAgnosticMAE",
    "EmbedMode",
    "LossWeights",
    "MaskedAutoencoderViT",
    "Reconstruction",
    "ViTClassifier",
    "ViTConfig",
    "build_ca_mae",
    "build_classifier",
    "build_mae",
    "ca_embed",
    "ca_forward",
    "extract_embedding",
    "load_checkpoint",
    "loss_combined",
    "loss_ft",
    "loss_mae",
    "mae_forward",
    "save_checkpoint",
    "wsl_forward",
]
