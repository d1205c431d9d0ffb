"""
Masked reconstruction losses.

``loss_mae`` is the mean over masked patches of per-patch MSE.
``loss_ft`` is the mean over masked patches of the per-patch L1 distance
between per-channel 2-D DFT magnitude spectra (unnormalized forward DFT).
``loss_combined`` blends them: (1 - alpha) * L_MAE + alpha * L_FT.

Visible patches are dropped by boolean indexing before any arithmetic, so
their targets cannot influence the value.
"""

from dataclasses import dataclass
from typing import Union

import numpy as np
import torch
from pydantic import BaseModel, Field

from phenom.core.exceptions import DimensionMismatchError, EmptyMaskError


class LossWeights(BaseModel):
    alpha: float = Field(0.01, gt=0.0, lt=1.0)


@dataclass
class Reconstruction:
    """
    Predicted and target patches for a batch.

    Shapes: predicted/target (B, N, P*P*C), mask (B, N) bool. The number of
    masked patches is ``n_masked``.
    """

    predicted_patches: torch.Tensor
    target_patches: torch.Tensor
    mask: torch.Tensor
    patch_size: int
    n_channels: int

    def __post_init__(self):
        if self.predicted_patches.dim() == 2:
            self.predicted_patches = self.predicted_patches.unsqueeze(0)
            self.target_patches = self.target_patches.unsqueeze(0)
            self.mask = self.mask.unsqueeze(0)
        if self.predicted_patches.shape != self.target_patches.shape:
            raise DimensionMismatchError(
                f"Prediction {tuple(self.predicted_patches.shape)} vs target {tuple(self.target_patches.shape)}"
            )
        if tuple(self.mask.shape) != tuple(self.predicted_patches.shape[:2]):
            raise DimensionMismatchError(
                f"Mask {tuple(self.mask.shape)} does not match tokens {tuple(self.predicted_patches.shape[:2])}"
            )
        if self.predicted_patches.shape[-1] != self.patch_size ** 2 * self.n_channels:
            raise DimensionMismatchError(
                f"Token width {self.predicted_patches.shape[-1]} != P*P*C = {self.patch_size ** 2 * self.n_channels}"
            )
        self.mask = self.mask.bool()

    @property
    def n_masked(self) -> int:
        return int(self.mask.sum().item())

    def masked(self):
        if self.n_masked == 0:
            raise EmptyMaskError("Reconstruction loss needs at least one masked patch")
        return self.predicted_patches[self.mask], self.target_patches[self.mask]


def loss_mae(recon: Reconstruction) -> torch.Tensor:
    pred, target = recon.masked()
    return ((pred - target) ** 2).mean(dim=-1).mean()


def fft_magnitude(patch: Union[np.ndarray, torch.Tensor]) -> Union[np.ndarray, torch.Tensor]:
    """
    |DFT| of each channel's P x P plane, for a (..., P, P, C) patch.

    Forward transform is unnormalized: a constant patch of value c has DC
    magnitude P*P*c.
    """
    as_numpy = isinstance(patch, np.ndarray)
    x = torch.from_numpy(patch) if as_numpy else patch
    if x.dim() < 3 or x.shape[-3] != x.shape[-2]:
        raise DimensionMismatchError(f"Patch must be (..., P, P, C), got {tuple(x.shape)}")
    spectrum = torch.fft.fft2(torch.movedim(x, -1, -3), dim=(-2, -1), norm="backward")
    mags = torch.movedim(spectrum.abs(), -3, -1)
    return mags.numpy() if as_numpy else mags


def _token_spectra(tokens: torch.Tensor, patch_size: int, n_channels: int) -> torch.Tensor:
    patches = tokens.reshape(-1, patch_size, patch_size, n_channels)
    return fft_magnitude(patches)


def loss_ft(recon: Reconstruction) -> torch.Tensor:
    pred, target = recon.masked()
    pred_mag = _token_spectra(pred, recon.patch_size, recon.n_channels)
    target_mag = _token_spectra(target, recon.patch_size, recon.n_channels)
    per_patch = (pred_mag - target_mag).abs().flatten(start_dim=1).mean(dim=1)
    return per_patch.mean()


def loss_combined(recon: Reconstruction, weights: LossWeights) -> torch.Tensor:
    return (1.0 - weights.alpha) * loss_mae(recon) + weights.alpha * loss_ft(recon)
