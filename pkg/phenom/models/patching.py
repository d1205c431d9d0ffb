"""
Patch grids, random masks and fixed sine-cosine positional embeddings.

Token layout: patches in row-major grid order; each token flattens one
P x P x C block as (row, col, channel).
"""

from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np
import torch

from phenom.core.exceptions import DimensionMismatchError, InvalidConfigError
from phenom.imaging.well_image import Crop


@dataclass(frozen=True)
class PatchGrid:
    tokens: np.ndarray          # N x (P*P*C)
    patch_size: int
    grid_shape: Tuple[int, int]
    n_channels: int

    @property
    def n_tokens(self) -> int:
        return self.tokens.shape[0]


def patchify(crop: Crop, patch_size: int) -> PatchGrid:
    """Split a crop into row-major P x P x C tokens."""
    h, w, c = crop.pixels.shape
    if patch_size <= 0 or h % patch_size or w % patch_size:
        raise DimensionMismatchError(f"Crop {h}x{w} is not divisible by patch size {patch_size}")
    gh, gw = h // patch_size, w // patch_size
    tokens = crop.pixels.reshape(gh, patch_size, gw, patch_size, c)
    tokens = tokens.transpose(0, 2, 1, 3, 4).reshape(gh * gw, patch_size * patch_size * c)
    return PatchGrid(tokens=np.ascontiguousarray(tokens), patch_size=patch_size, grid_shape=(gh, gw), n_channels=c)


def unpatchify(grid: PatchGrid) -> np.ndarray:
    """Inverse of ``patchify``: back to an H x W x C array."""
    gh, gw = grid.grid_shape
    p, c = grid.patch_size, grid.n_channels
    x = grid.tokens.reshape(gh, gw, p, p, c).transpose(0, 2, 1, 3, 4)
    return np.ascontiguousarray(x.reshape(gh * p, gw * p, c))


def patchify_tensor(imgs: torch.Tensor, patch_size: int) -> torch.Tensor:
    """(B, C, H, W) -> (B, N, P*P*C), same layout as ``patchify``."""
    b, c, h, w = imgs.shape
    if h % patch_size or w % patch_size:
        raise DimensionMismatchError(f"Input {h}x{w} is not divisible by patch size {patch_size}")
    gh, gw = h // patch_size, w // patch_size
    x = imgs.reshape(b, c, gh, patch_size, gw, patch_size)
    x = torch.einsum("nchpwq->nhwpqc", x)
    return x.reshape(b, gh * gw, patch_size * patch_size * c)


def unpatchify_tensor(tokens: torch.Tensor, patch_size: int, channels: int) -> torch.Tensor:
    """(B, N, P*P*C) -> (B, C, H, W) for a square grid."""
    b, n, _ = tokens.shape
    g = int(round(n ** 0.5))
    if g * g != n:
        raise DimensionMismatchError(f"{n} tokens do not form a square grid")
    x = tokens.reshape(b, g, g, patch_size, patch_size, channels)
    x = torch.einsum("nhwpqc->nchpwq", x)
    return x.reshape(b, channels, g * patch_size, g * patch_size)


@dataclass(frozen=True)
class MaskSpec:
    """Boolean mask over N tokens; True means the token is hidden from the encoder."""

    mask: np.ndarray
    ratio: float
    seed: int

    @property
    def n_masked(self) -> int:
        return int(self.mask.sum())

    @property
    def visible_indices(self) -> np.ndarray:
        return np.flatnonzero(~self.mask)


def masked_count(n_tokens: int, ratio: float) -> int:
    # Python's round() is half-to-even
    return int(round(ratio * n_tokens))


def sample_mask(n_tokens: int, ratio: float, seed: int) -> MaskSpec:
    """Uniformly random subset of round(ratio * n_tokens) masked tokens."""
    if not 0.0 <= ratio < 1.0:
        raise InvalidConfigError(f"Mask ratio must be in [0, 1), got {ratio}")
    if n_tokens <= 0:
        raise DimensionMismatchError(f"n_tokens must be positive, got {n_tokens}")
    rng = np.random.default_rng(seed)
    hidden = rng.permutation(n_tokens)[:masked_count(n_tokens, ratio)]
    mask = np.zeros(n_tokens, dtype=bool)
    mask[hidden] = True
    return MaskSpec(mask=mask, ratio=ratio, seed=seed)


def masks_to_tensors(masks: Sequence[MaskSpec]) -> Tuple[torch.Tensor, torch.Tensor]:
    """
    Stack per-sample masks into (mask, ids_keep) tensors.

    All masks must hide the same number of tokens so visible sets can be
    gathered into one dense batch.
    """
    counts = {m.n_masked for m in masks}
    if len(counts) != 1:
        raise DimensionMismatchError(f"Masks in one batch hide different token counts: {sorted(counts)}")
    mask = torch.from_numpy(np.stack([m.mask for m in masks]))
    ids_keep = torch.from_numpy(np.stack([m.visible_indices for m in masks]).astype(np.int64))
    return mask, ids_keep


def get_1d_sincos_pos_embed_from_grid(embed_dim: int, pos: np.ndarray) -> np.ndarray:
    omega = np.arange(embed_dim // 2, dtype=np.float64)
    omega /= embed_dim / 2.0
    omega = 1.0 / 10000 ** omega
    out = np.einsum("m,d->md", pos.reshape(-1), omega)
    return np.concatenate([np.sin(out), np.cos(out)], axis=1)


def get_2d_sincos_pos_embed(embed_dim: int, grid_size: int) -> np.ndarray:
    """(grid_size**2, embed_dim) fixed embeddings, row-major like the tokens."""
    grid_h = np.arange(grid_size, dtype=np.float64)
    grid_w = np.arange(grid_size, dtype=np.float64)
    grid = np.meshgrid(grid_w, grid_h)
    grid = np.stack(grid, axis=0).reshape(2, 1, grid_size, grid_size)
    emb_h = get_1d_sincos_pos_embed_from_grid(embed_dim // 2, grid[0])
    emb_w = get_1d_sincos_pos_embed_from_grid(embed_dim // 2, grid[1])
    return np.concatenate([emb_h, emb_w], axis=1)


def batch_masks(n_tokens: int, ratio: float, seeds: List[int]) -> List[MaskSpec]:
    return [sample_mask(n_tokens, ratio, s) for s in seeds]
