"""
Channel-agnostic MAE.

Each channel is patchified on its own (P x P x 1 tokens) and projected by
one shared tokenizer; every channel gets the same sine-cosine positions
and no channel-identity embedding, so the encoder cannot tell channels
apart except by content. Masks are drawn independently per channel, the
encoder attends jointly over all visible tokens, and channel c is
reconstructed by its own decoder. At inference the decoders are unused
and any number or ordering of channels can be embedded.
"""

from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Tuple

import numpy as np
import torch
import torch.nn as nn

from phenom.core.exceptions import ChannelMismatchError, DimensionMismatchError, InvalidConfigError
from phenom.core.logger import PhenomLogger
from phenom.imaging.well_image import Crop
from phenom.models.config import ViTConfig
from phenom.models.losses import LossWeights, Reconstruction, loss_combined, loss_mae
from phenom.models.patching import masked_count, patchify_tensor
from phenom.models.vit import fixed_pos_embed, init_weights, make_blocks

logger = PhenomLogger.get_logger(__name__)


class EmbedMode(str, Enum):
    CLASS_TOKEN = "CLASS_TOKEN"
    MEAN_ALL = "MEAN_ALL"
    CONCAT_CHANNEL_MEANS = "CONCAT_CHANNEL_MEANS"


@dataclass
class ChannelTokenBatch:
    """Channel-major tokens: all of channel 0's N tokens, then channel 1's, ..."""

    tokens: torch.Tensor            # (B, C*N, width)
    channel_of_token: torch.Tensor  # (C*N,)
    n_channels: int
    n_patches: int


@dataclass(frozen=True)
class ChannelMaskSpec:
    masks: np.ndarray   # (C, N) bool, True = hidden
    ratio: float
    seed: int

    @property
    def n_channels(self) -> int:
        return self.masks.shape[0]


def sample_channel_masks(n_channels: int, n_patches: int, ratio: float, seed: int) -> ChannelMaskSpec:
    """C independent masks, each hiding round(ratio * N) tokens."""
    if not 0.0 <= ratio < 1.0:
        raise InvalidConfigError(f"Mask ratio must be in [0, 1), got {ratio}")
    rng = np.random.default_rng(seed)
    k = masked_count(n_patches, ratio)
    masks = np.zeros((n_channels, n_patches), dtype=bool)
    for c in range(n_channels):
        masks[c, rng.permutation(n_patches)[:k]] = True
    return ChannelMaskSpec(masks=masks, ratio=ratio, seed=seed)


def channel_masks_to_tensors(specs: List[ChannelMaskSpec]) -> Tuple[torch.Tensor, torch.Tensor]:
    """
    (B, C, N) bool masks and (B, C*K) visible indices into the channel-major
    C*N sequence, grouped by channel.
    """
    masks = np.stack([s.masks for s in specs])
    b, c, n = masks.shape
    visible = [[np.flatnonzero(~masks[i, ch]) + ch * n for ch in range(c)] for i in range(b)]
    lengths = {len(v) for row in visible for v in row}
    if len(lengths) != 1:
        raise DimensionMismatchError("Channel masks in one batch hide different token counts")
    ids_keep = np.stack([np.concatenate(row) for row in visible]).astype(np.int64)
    return torch.from_numpy(masks), torch.from_numpy(ids_keep)


class ChannelDecoder(nn.Module):
    """Decoder for one channel: predicts P x P pixels at every grid position."""

    def __init__(self, config: ViTConfig, grid_size: int):
        super().__init__()
        p = config.patch_size
        self.embed = nn.Linear(config.width, config.decoder_width)
        self.mask_token = nn.Parameter(torch.zeros(1, 1, config.decoder_width))
        self.register_buffer("pos_embed", fixed_pos_embed(config.decoder_width, grid_size), persistent=False)
        self.blocks = make_blocks(config.decoder_depth, config.decoder_width, config.decoder_heads, config.mlp_ratio)
        self.norm = nn.LayerNorm(config.decoder_width)
        self.pred = nn.Linear(config.decoder_width, p * p)

    def forward(self, cls_state: torch.Tensor, visible: torch.Tensor, positions: torch.Tensor) -> torch.Tensor:
        x = self.embed(torch.cat([cls_state, visible], dim=1))
        b, _, d = x.shape
        n = self.pos_embed.shape[1]
        full = self.mask_token.to(x.dtype).expand(b, n, d)
        full = full.scatter(1, positions.unsqueeze(-1).expand(-1, -1, d), x[:, 1:, :])
        x = torch.cat([x[:, :1, :], full + self.pos_embed.to(x.dtype)], dim=1)
        for block in self.blocks:
            x = block(x)
        return self.pred(self.norm(x))[:, 1:, :]


class ChannelAgnosticMAE(nn.Module):
    """
    ``config.in_chans`` is the training channel count, i.e. the number of
    per-channel decoders.
    """

    def __init__(self, config: ViTConfig):
        super().__init__()
        self.config = config
        p = config.patch_size
        self.grid_size = config.img_size // p
        self.n_patches = self.grid_size ** 2
        self.tokenizer = nn.Linear(p * p, config.width)
        self.cls_token = nn.Parameter(torch.zeros(1, 1, config.width))
        self.register_buffer("pos_embed", fixed_pos_embed(config.width, self.grid_size), persistent=False)
        self.blocks = make_blocks(
            config.depth, config.width, config.heads, config.mlp_ratio,
            drop_path_rate=config.stochastic_depth_rate,
            parallel=config.parallel_blocks,
            qk_norm=config.qk_norm,
            qkv_bias=config.qk_bias,
            init_values=config.layer_scale_init,
        )
        self.norm = nn.LayerNorm(config.width)
        self.decoders = nn.ModuleList([ChannelDecoder(config, self.grid_size) for _ in range(config.in_chans)])
        torch.nn.init.normal_(self.cls_token, std=0.02)
        for decoder in self.decoders:
            torch.nn.init.normal_(decoder.mask_token, std=0.02)
        self.apply(init_weights)

    def channel_patches(self, imgs: torch.Tensor) -> torch.Tensor:
        """(B, C, S, S) -> (B, C, N, P*P)."""
        b, c, h, w = imgs.shape
        if h != self.config.img_size or w != self.config.img_size:
            raise DimensionMismatchError(
                f"Model expects {self.config.img_size}x{self.config.img_size} crops, got {h}x{w}"
            )
        tokens = patchify_tensor(imgs.reshape(b * c, 1, h, w), self.config.patch_size)
        return tokens.reshape(b, c, self.n_patches, -1)

    def tokenize_channels(self, imgs: torch.Tensor) -> ChannelTokenBatch:
        b, c = imgs.shape[:2]
        patches = self.channel_patches(imgs).reshape(b, c * self.n_patches, -1)
        tokens = self.tokenizer(patches) + self.pos_embed.to(patches.dtype).repeat(1, c, 1)
        channel_of_token = torch.arange(c).repeat_interleave(self.n_patches)
        return ChannelTokenBatch(tokens=tokens, channel_of_token=channel_of_token,
                                 n_channels=c, n_patches=self.n_patches)

    def encode(self, batch: ChannelTokenBatch, ids_keep: Optional[torch.Tensor] = None) -> torch.Tensor:
        x = batch.tokens
        if ids_keep is not None:
            x = torch.gather(x, 1, ids_keep.unsqueeze(-1).expand(-1, -1, x.shape[-1]))
        cls = self.cls_token.to(x.dtype).expand(x.shape[0], -1, -1)
        x = torch.cat([cls, x], dim=1)
        for block in self.blocks:
            x = block(x)
        return self.norm(x)

    def forward(self, imgs: torch.Tensor, masks: torch.Tensor, ids_keep: torch.Tensor) -> List[Reconstruction]:
        """
        Args:
            imgs: (B, C, S, S)
            masks: (B, C, N) bool
            ids_keep: (B, C*K) visible indices, grouped by channel

        Returns:
            One Reconstruction per channel with P*P-wide tokens
        """
        b, c = imgs.shape[:2]
        if c > len(self.decoders):
            raise ChannelMismatchError(f"{c} channels but only {len(self.decoders)} decoders")
        if masks.shape != (b, c, self.n_patches):
            raise DimensionMismatchError(f"Mask shape {tuple(masks.shape)} does not match ({b}, {c}, {self.n_patches})")
        batch = self.tokenize_channels(imgs)
        latent = self.encode(batch, ids_keep)
        k = ids_keep.shape[1] // c
        targets = self.channel_patches(imgs)
        recons = []
        for ch in range(c):
            visible = latent[:, 1 + ch * k: 1 + (ch + 1) * k, :]
            positions = ids_keep[:, ch * k:(ch + 1) * k] - ch * self.n_patches
            pred = self.decoders[ch](latent[:, :1, :], visible, positions)
            recons.append(Reconstruction(
                predicted_patches=pred,
                target_patches=targets[:, ch],
                mask=masks[:, ch],
                patch_size=self.config.patch_size,
                n_channels=1,
            ))
        return recons

    def embed(self, imgs: torch.Tensor, mode: EmbedMode = EmbedMode.MEAN_ALL) -> torch.Tensor:
        """Encoder-only embedding for any number of channels."""
        mode = EmbedMode(mode)
        batch = self.tokenize_channels(imgs)
        states = self.encode(batch)
        if mode is EmbedMode.CLASS_TOKEN:
            return states[:, 0, :]
        patches = states[:, 1:, :]
        if mode is EmbedMode.MEAN_ALL:
            return patches.mean(dim=1)
        b, c = imgs.shape[:2]
        per_channel = patches.reshape(b, c, self.n_patches, -1).mean(dim=2)
        return per_channel.reshape(b, -1)


def build_ca_mae(config: ViTConfig, seed: int = 0) -> ChannelAgnosticMAE:
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        model = ChannelAgnosticMAE(config)
    n_params = sum(p.numel() for p in model.parameters())
    logger.info(f"Built CA-MAE ViT-{config.variant}/{config.patch_size} "
                f"with {config.in_chans} decoders: {n_params:,} parameters")
    return model


def tokenize_channels(crop: Crop, model: ChannelAgnosticMAE) -> ChannelTokenBatch:
    imgs = crop.to_tensor(next(model.parameters()).dtype).unsqueeze(0)
    return model.tokenize_channels(imgs)


def ca_forward(crop: Crop, masks: ChannelMaskSpec, model: ChannelAgnosticMAE) -> List[Reconstruction]:
    imgs = crop.to_tensor(next(model.parameters()).dtype).unsqueeze(0)
    if masks.n_channels != crop.n_channels:
        raise DimensionMismatchError(f"{masks.n_channels} channel masks for {crop.n_channels} channels")
    mask_t, ids_keep = channel_masks_to_tensors([masks])
    return model(imgs, mask_t, ids_keep)


def ca_loss(recons: List[Reconstruction], weights: Optional[LossWeights] = None) -> torch.Tensor:
    """Mean over channels of the per-channel loss (plain MAE loss when weights is None)."""
    losses = [loss_combined(r, weights) if weights is not None else loss_mae(r) for r in recons]
    return torch.stack(losses).mean()


@torch.no_grad()
def ca_embed(crop: Crop, model: ChannelAgnosticMAE, mode: EmbedMode = EmbedMode.MEAN_ALL) -> np.ndarray:
    was_training = model.training
    model.eval()
    try:
        imgs = crop.to_tensor(next(model.parameters()).dtype).unsqueeze(0)
        return model.embed(imgs, mode)[0].cpu().numpy()
    finally:
        model.train(was_training)
