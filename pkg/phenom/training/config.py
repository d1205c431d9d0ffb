"""Training run configuration."""

from typing import Literal, Optional

from pydantic import BaseModel, Field

from phenom.models.losses import LossWeights

Objective = Literal["MAE", "CA_MAE", "WSL"]


class TrainConfig(BaseModel):
    """
    Optimizer, schedule and sampling settings for one training run.

    Defaults are desk scale: batch 32, max_lr 1e-3, Lion with betas
    (0.9, 0.95) and weight decay 0.05, 10% linear warmup then cosine decay,
    no gradient clipping. ``alpha=None`` trains on the plain masked MSE.
    """

    objective: Objective = "MAE"
    batch_size: int = Field(32, ge=1)
    max_lr: float = Field(1e-3, gt=0.0)
    schedule: Literal["one_cycle_cosine"] = "one_cycle_cosine"
    warmup_fraction: float = Field(0.1, ge=0.0, lt=1.0)
    optimizer: Literal["LION", "ADAMW"] = "LION"
    beta1: float = Field(0.9, ge=0.0, lt=1.0)
    beta2: float = Field(0.95, ge=0.0, lt=1.0)
    weight_decay: float = Field(0.05, ge=0.0)
    eps: float = Field(1e-8, gt=0.0)
    epochs: int = Field(10, ge=1)
    alpha: Optional[LossWeights] = Field(default_factory=LossWeights)
    mask_ratio: float = Field(0.75, ge=0.0, lt=1.0)
    seed: int = Field(0, ge=0)

    # Sampling
    crops_per_image: int = Field(1, ge=1)
    augment: bool = True
    weighted_sampling: bool = False
    workers: int = Field(0, ge=0)

    # Validation and checkpoints
    val_fraction: float = Field(0.0, ge=0.0, lt=1.0)
    checkpoint_every_epoch: bool = True
    early_stopping_patience: Optional[int] = Field(None, ge=1)
