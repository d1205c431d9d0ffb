"""Training: schedule, optimizers, crop datasets and the training loop."""

from phenom.training.config import TrainConfig
from phenom.training.optimizers import Lion, optimizer_step
from phenom.training.schedule import lr_at
from phenom.training.trainer import LossCurve, Trainer, fit

__all__ = [
    "Lion",
    "LossCurve",
    "TrainConfig",
    "Trainer",
    "fit",
    "lr_at",
    "optimizer_step",
]
