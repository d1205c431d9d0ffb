"""
Masked autoencoder ViT.

The encoder sees only visible tokens; the decoder receives the encoded
visible tokens scattered back to their grid positions with a learned mask
token everywhere else, and predicts pixels for all N positions.
"""

from typing import Optional

import numpy as np
import torch
import torch.nn as nn

from phenom.core.exceptions import ChannelMismatchError, DimensionMismatchError
from phenom.core.logger import PhenomLogger
from phenom.imaging.well_image import Crop
from phenom.models.config import ViTConfig
from phenom.models.losses import Reconstruction
from phenom.models.patching import MaskSpec, masks_to_tensors, patchify_tensor
from phenom.models.vit import ViTEncoder, fixed_pos_embed, init_weights, make_blocks

logger = PhenomLogger.get_logger(__name__)


class MaskedAutoencoderViT(nn.Module):
    """Standard MAE over P x P x C patch tokens."""

    def __init__(self, config: ViTConfig):
        super().__init__()
        self.config = config
        p, c = config.patch_size, config.in_chans
        self.token_dim = p * p * c
        self.encoder = ViTEncoder(config, self.token_dim)

        self.decoder_embed = nn.Linear(config.width, config.decoder_width)
        self.mask_token = nn.Parameter(torch.zeros(1, 1, config.decoder_width))
        self.register_buffer(
            "decoder_pos_embed",
            fixed_pos_embed(config.decoder_width, self.encoder.grid_size),
            persistent=False,
        )
        self.decoder_blocks = make_blocks(
            config.decoder_depth, config.decoder_width, config.decoder_heads, config.mlp_ratio
        )
        self.decoder_norm = nn.LayerNorm(config.decoder_width)
        self.decoder_pred = nn.Linear(config.decoder_width, self.token_dim)
        self.initialize_weights()

    def initialize_weights(self):
        torch.nn.init.normal_(self.encoder.cls_token, std=0.02)
        torch.nn.init.normal_(self.mask_token, std=0.02)
        self.apply(init_weights)

    def check_input(self, imgs: torch.Tensor) -> None:
        if imgs.dim() != 4:
            raise DimensionMismatchError(f"Expected (B, C, H, W), got {tuple(imgs.shape)}")
        if imgs.shape[1] != self.config.in_chans:
            raise ChannelMismatchError(
                f"Model was built for {self.config.in_chans} channels, input has {imgs.shape[1]}"
            )
        if imgs.shape[2] != self.config.img_size or imgs.shape[3] != self.config.img_size:
            raise DimensionMismatchError(
                f"Model expects {self.config.img_size}x{self.config.img_size} crops, "
                f"got {imgs.shape[2]}x{imgs.shape[3]}"
            )

    def targets(self, imgs: torch.Tensor) -> torch.Tensor:
        target = patchify_tensor(imgs, self.config.patch_size)
        if self.config.norm_pix_loss:
            mean = target.mean(dim=-1, keepdim=True)
            var = target.var(dim=-1, keepdim=True)
            target = (target - mean) / (var + 1.0e-6) ** 0.5
        return target

    def forward_decoder(self, latent: torch.Tensor, ids_keep: torch.Tensor, n_tokens: int) -> torch.Tensor:
        x = self.decoder_embed(latent)
        b, _, d = x.shape
        full = self.mask_token.to(x.dtype).expand(b, n_tokens, d)
        full = full.scatter(1, ids_keep.unsqueeze(-1).expand(-1, -1, d), x[:, 1:, :])
        full = full + self.decoder_pos_embed.to(x.dtype)
        x = torch.cat([x[:, :1, :], full], dim=1)
        for block in self.decoder_blocks:
            x = block(x)
        x = self.decoder_norm(x)
        return self.decoder_pred(x)[:, 1:, :]

    def forward(self, imgs: torch.Tensor, mask: torch.Tensor, ids_keep: torch.Tensor) -> Reconstruction:
        """
        Args:
            imgs: (B, C, S, S) standardized crops
            mask: (B, N) bool, True for hidden tokens
            ids_keep: (B, K) visible token indices (any order)
        """
        self.check_input(imgs)
        tokens = patchify_tensor(imgs, self.config.patch_size)
        n = tokens.shape[1]
        if mask.shape != (imgs.shape[0], n):
            raise DimensionMismatchError(f"Mask shape {tuple(mask.shape)} does not match {n} tokens")
        latent = self.encoder(tokens, ids_keep)
        pred = self.forward_decoder(latent, ids_keep, n)
        return Reconstruction(
            predicted_patches=pred,
            target_patches=self.targets(imgs),
            mask=mask,
            patch_size=self.config.patch_size,
            n_channels=self.config.in_chans,
        )

    def embed(self, imgs: torch.Tensor) -> torch.Tensor:
        """Mean of final-layer patch embeddings over all N tokens (class token excluded)."""
        self.check_input(imgs)
        latent = self.encoder(patchify_tensor(imgs, self.config.patch_size))
        return latent[:, 1:, :].mean(dim=1)


def build_mae(config: ViTConfig, seed: int = 0) -> MaskedAutoencoderViT:
    """Construct an MAE with initialization drawn from ``seed`` only."""
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        model = MaskedAutoencoderViT(config)
    n_params = sum(p.numel() for p in model.parameters())
    logger.info(f"Built MAE ViT-{config.variant}/{config.patch_size}: {n_params:,} parameters")
    return model


def mae_forward(crop: Crop, mask: MaskSpec, model: MaskedAutoencoderViT) -> Reconstruction:
    """Single-crop forward pass with one mask."""
    imgs = crop.to_tensor(next(model.parameters()).dtype).unsqueeze(0)
    if mask.mask.shape[0] != model.config.n_patches:
        raise DimensionMismatchError(
            f"Mask covers {mask.mask.shape[0]} tokens, model has {model.config.n_patches}"
        )
    mask_t, ids_keep = masks_to_tensors([mask])
    return model(imgs, mask_t, ids_keep)


@torch.no_grad()
def extract_embedding(crop: Crop, model: MaskedAutoencoderViT) -> np.ndarray:
    """Unmasked encoder pass; mean patch embedding of length ``width``."""
    was_training = model.training
    model.eval()
    try:
        imgs = crop.to_tensor(next(model.parameters()).dtype).unsqueeze(0)
        return model.embed(imgs)[0].cpu().numpy()
    finally:
        model.train(was_training)
