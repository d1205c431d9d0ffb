"""
ViT encoder shared by the MAE, CA-MAE and weakly supervised classifier.

Transformer blocks come from timm. The stability options (parallel
scaling blocks, QK-norm, QK-bias, LayerScale, stochastic depth) map
directly onto timm block arguments.
"""

from typing import Optional

import numpy as np
import torch
import torch.nn as nn
from timm.models.vision_transformer import Block, ParallelScalingBlock

from phenom.models.config import ViTConfig
from phenom.models.patching import get_2d_sincos_pos_embed


def make_blocks(
    depth: int,
    width: int,
    heads: int,
    mlp_ratio: float,
    drop_path_rate: float = 0.0,
    parallel: bool = False,
    qk_norm: bool = False,
    qkv_bias: bool = True,
    init_values: Optional[float] = None,
) -> nn.ModuleList:
    """Stack of timm blocks with a linearly increasing stochastic depth rule."""
    block_cls = ParallelScalingBlock if parallel else Block
    rates = np.linspace(0.0, drop_path_rate, depth) if depth > 1 else [drop_path_rate]
    return nn.ModuleList([
        block_cls(
            dim=width,
            num_heads=heads,
            mlp_ratio=mlp_ratio,
            qkv_bias=qkv_bias,
            qk_norm=qk_norm,
            init_values=init_values,
            drop_path=float(rate),
            norm_layer=nn.LayerNorm,
        )
        for rate in rates
    ])


def fixed_pos_embed(width: int, grid_size: int) -> torch.Tensor:
    return torch.from_numpy(get_2d_sincos_pos_embed(width, grid_size)).float().unsqueeze(0)


def init_weights(module: nn.Module) -> None:
    if isinstance(module, nn.Linear):
        nn.init.xavier_uniform_(module.weight)
        if module.bias is not None:
            nn.init.constant_(module.bias, 0)
    elif isinstance(module, nn.LayerNorm):
        if module.elementwise_affine:
            nn.init.constant_(module.bias, 0)
            nn.init.constant_(module.weight, 1.0)


class ViTEncoder(nn.Module):
    """
    Patch-token encoder with a prepended class token.

    Tokens are linearly projected patchified pixels (equivalent to a
    stride-P convolution) plus fixed 2-D sine-cosine positions. The class
    token carries no positional embedding.
    """

    def __init__(self, config: ViTConfig, token_dim: int):
        super().__init__()
        self.config = config
        self.grid_size = config.img_size // config.patch_size
        self.patch_embed = nn.Linear(token_dim, config.width)
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

    def run_blocks(self, x: torch.Tensor) -> torch.Tensor:
        for block in self.blocks:
            x = block(x)
        return self.norm(x)

    def forward(self, tokens: torch.Tensor, ids_keep: Optional[torch.Tensor] = None) -> torch.Tensor:
        """
        Args:
            tokens: (B, N, token_dim) patchified pixels
            ids_keep: (B, K) indices of visible tokens, any order; None keeps all

        Returns:
            (B, 1 + K, width) final-layer states, class token first
        """
        x = self.patch_embed(tokens) + self.pos_embed.to(tokens.dtype)
        if ids_keep is not None:
            x = torch.gather(x, 1, ids_keep.unsqueeze(-1).expand(-1, -1, x.shape[-1]))
        cls = self.cls_token.to(x.dtype).expand(x.shape[0], -1, -1)
        return self.run_blocks(torch.cat([cls, x], dim=1))
