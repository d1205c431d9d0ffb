"""
Image value types: a whole-well multi-channel image and the crops cut from it.

Pixels are stored H x W x C (channels last) as float32, matching the on-disk
container layout. Models take C x H x W tensors; see ``Crop.to_tensor``.
"""

from dataclasses import dataclass, field, replace
from typing import List, Optional, Tuple

import numpy as np
import torch

from phenom.core.exceptions import DimensionMismatchError

NEG_CONTROL = "NEG_CONTROL"


@dataclass(frozen=True)
class WellImage:
    """
    One well's image plus the identifiers used for grouping and correction.
    """

    pixels: np.ndarray
    channel_names: List[str]
    well_id: str
    plate_id: str
    experiment_id: str
    perturbation_id: str

    def __post_init__(self):
        if self.pixels.ndim != 3:
            raise DimensionMismatchError(
                f"WellImage pixels must be H x W x C, got shape {self.pixels.shape}"
            )
        h, w, c = self.pixels.shape
        if h <= 0 or w <= 0 or c < 1:
            raise DimensionMismatchError(f"Degenerate image shape {self.pixels.shape}")
        if len(self.channel_names) != c:
            raise DimensionMismatchError(
                f"{len(self.channel_names)} channel names for {c} channels in well {self.well_id}"
            )
        if len(set(self.channel_names)) != c:
            raise DimensionMismatchError(f"Duplicate channel names: {self.channel_names}")

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def n_channels(self) -> int:
        return self.pixels.shape[2]

    @property
    def is_control(self) -> bool:
        return self.perturbation_id == NEG_CONTROL

    def select_channels(self, indices: List[int]) -> "WellImage":
        """Return a copy restricted (and reordered) to the given channel indices."""
        return replace(
            self,
            pixels=np.ascontiguousarray(self.pixels[:, :, indices]),
            channel_names=[self.channel_names[i] for i in indices],
        )


@dataclass(frozen=True)
class Crop:
    """
    An S x S x C window of a well image.

    ``provenance`` is (well_id, row_offset, col_offset).
    """

    pixels: np.ndarray
    provenance: Tuple[str, int, int] = ("", 0, 0)
    standardized: bool = False
    channel_names: Optional[List[str]] = field(default=None, compare=False)

    @property
    def size(self) -> int:
        return self.pixels.shape[0]

    @property
    def n_channels(self) -> int:
        return self.pixels.shape[2]

    def to_tensor(self, dtype: torch.dtype = torch.float32) -> torch.Tensor:
        """C x S x S tensor for model input."""
        return torch.from_numpy(np.ascontiguousarray(self.pixels.transpose(2, 0, 1))).to(dtype)


def stack_crops(crops: List[Crop], dtype: torch.dtype = torch.float32) -> torch.Tensor:
    """Batch crops into a B x C x S x S tensor."""
    if not crops:
        raise DimensionMismatchError("Cannot stack an empty list of crops")
    return torch.stack([c.to_tensor(dtype) for c in crops])
