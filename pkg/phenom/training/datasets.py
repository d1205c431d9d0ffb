"""
Crop datasets and epoch samplers.

Every random choice is keyed on (seed, epoch, index), so batches are the
same whether items are produced serially or by DataLoader workers.
"""

from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
import torch
from torch.utils.data import Dataset, Sampler

from phenom.core.exceptions import EmptyInputError
from phenom.imaging.preprocessing import augment_flips, center_crop, random_crop
from phenom.imaging.well_image import WellImage

# Independent RNG streams
CROP_STREAM = 1
MASK_STREAM = 2
ORDER_STREAM = 3
SPLIT_STREAM = 4
VAL_STREAM = 5


def label_index(images: Sequence[WellImage]) -> Dict[str, int]:
    """Perturbation id -> class index, sorted by id."""
    return {pid: i for i, pid in enumerate(sorted({im.perturbation_id for im in images}))}


class CropDataset(Dataset):
    """
    ``crops_per_image`` random, self-standardized crops per well per epoch,
    optionally flip-augmented. Items are (C x S x S tensor, label).
    """

    def __init__(
        self,
        images: Sequence[WellImage],
        crop_size: int,
        seed: int = 0,
        crops_per_image: int = 1,
        augment: bool = True,
        labels: Optional[Dict[str, int]] = None,
    ):
        if not images:
            raise EmptyInputError("Training dataset has no images")
        self.images = list(images)
        self.crop_size = crop_size
        self.seed = seed
        self.crops_per_image = crops_per_image
        self.augment = augment
        self.labels = labels or label_index(self.images)
        self.epoch = 0

    def set_epoch(self, epoch: int) -> None:
        self.epoch = epoch

    def __len__(self) -> int:
        return len(self.images) * self.crops_per_image

    def label_of(self, index: int) -> int:
        return self.labels[self.images[index // self.crops_per_image].perturbation_id]

    def __getitem__(self, index: int) -> Tuple[torch.Tensor, int]:
        image = self.images[index // self.crops_per_image]
        crop_seed, flip_seed = np.random.default_rng([self.seed, CROP_STREAM, self.epoch, index]).integers(
            0, 2 ** 31 - 1, size=2
        )
        crop = random_crop(image, self.crop_size, int(crop_seed))
        if self.augment:
            crop = augment_flips(crop, int(flip_seed))
        return crop.to_tensor(), self.labels[image.perturbation_id]


class CenterCropDataset(Dataset):
    """Fixed center crops for validation loss."""

    def __init__(self, images: Sequence[WellImage], crop_size: int, labels: Optional[Dict[str, int]] = None):
        self.images = list(images)
        self.crop_size = crop_size
        self.labels = labels or label_index(self.images)

    def __len__(self) -> int:
        return len(self.images)

    def __getitem__(self, index: int) -> Tuple[torch.Tensor, int]:
        image = self.images[index]
        return center_crop(image, self.crop_size).to_tensor(), self.labels.get(image.perturbation_id, 0)


class EpochSampler(Sampler):
    """A fresh permutation per epoch: sampling without replacement."""

    def __init__(self, n_items: int, seed: int = 0):
        self.n_items = n_items
        self.seed = seed
        self.epoch = 0

    def set_epoch(self, epoch: int) -> None:
        self.epoch = epoch

    def __len__(self) -> int:
        return self.n_items

    def __iter__(self) -> Iterator[int]:
        order = np.random.default_rng([self.seed, ORDER_STREAM, self.epoch]).permutation(self.n_items)
        return iter(order.tolist())


class WeightedLabelSampler(EpochSampler):
    """
    Draws with replacement, each item weighted by 1 / (count of its label),
    so every label is equally likely per draw.
    """

    def __init__(self, labels: Sequence[int], seed: int = 0):
        super().__init__(len(labels), seed)
        labels = np.asarray(labels)
        _, inverse, counts = np.unique(labels, return_inverse=True, return_counts=True)
        weights = 1.0 / counts[inverse]
        self.probabilities = weights / weights.sum()

    def __iter__(self) -> Iterator[int]:
        rng = np.random.default_rng([self.seed, ORDER_STREAM, self.epoch])
        return iter(rng.choice(self.n_items, size=self.n_items, replace=True, p=self.probabilities).tolist())


def split_validation(images: Sequence[WellImage], fraction: float, seed: int) -> Tuple[List[WellImage], List[WellImage]]:
    """Deterministic (train, val) split of wells."""
    images = list(images)
    n_val = int(round(fraction * len(images)))
    if n_val == 0:
        return images, []
    order = np.random.default_rng([seed, SPLIT_STREAM]).permutation(len(images))
    val_idx = set(order[:n_val].tolist())
    train = [im for i, im in enumerate(images) if i not in val_idx]
    val = [im for i, im in enumerate(images) if i in val_idx]
    if not train:
        raise EmptyInputError(f"val_fraction {fraction} leaves no training images")
    return train, val


def step_mask_seeds(seed: int, step: int, batch_size: int) -> List[int]:
    """Per-sample mask seeds for one optimizer step."""
    rng = np.random.default_rng([seed, MASK_STREAM, step])
    return [int(s) for s in rng.integers(0, 2 ** 31 - 1, size=batch_size)]


def validation_mask_seeds(seed: int, n_items: int) -> List[int]:
    """Fixed mask seeds so validation loss is comparable across epochs."""
    rng = np.random.default_rng([seed, VAL_STREAM])
    return [int(s) for s in rng.integers(0, 2 ** 31 - 1, size=n_items)]
