"""
Training loop for MAE, CA-MAE and WSL objectives.

One optimizer step per batch; the loss recorded for step k is computed
before the step-k update. Crops, sampling order, masks and torch-side
randomness (stochastic depth) are all derived from ``TrainConfig.seed``,
so two runs with the same inputs produce the same LossCurve.
"""

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import pandas as pd
import torch
import torch.nn as nn
from torch.utils.data import DataLoader

from phenom.core.exceptions import EmptyInputError, InvalidConfigError, InvalidLabelError, TrainingDivergedError
from phenom.core.logger import PhenomLogger
from phenom.imaging.well_image import WellImage
from phenom.models.ca_mae import ca_loss, channel_masks_to_tensors, sample_channel_masks
from phenom.models.checkpoint import load_checkpoint, objective_of, save_checkpoint
from phenom.models.classifier import classification_loss
from phenom.models.losses import loss_combined, loss_mae
from phenom.models.patching import batch_masks, masks_to_tensors
from phenom.training.config import TrainConfig
from phenom.training.datasets import (
    CenterCropDataset,
    CropDataset,
    EpochSampler,
    WeightedLabelSampler,
    label_index,
    split_validation,
    step_mask_seeds,
    validation_mask_seeds,
)
from phenom.training.optimizers import build_optimizer, set_lr
from phenom.training.schedule import lr_at

logger = PhenomLogger.get_logger(__name__)


@dataclass
class LossCurve:
    """(step, training loss, learning rate) rows plus per-epoch validation loss."""

    steps: List[int] = field(default_factory=list)
    losses: List[float] = field(default_factory=list)
    lrs: List[float] = field(default_factory=list)
    val_losses: Dict[int, float] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.steps)

    def append(self, step: int, loss: float, lr: float) -> None:
        if self.steps and step <= self.steps[-1]:
            raise ValueError(f"Loss curve steps must increase: {step} after {self.steps[-1]}")
        self.steps.append(int(step))
        self.losses.append(float(loss))
        self.lrs.append(float(lr))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"step": self.steps, "loss": self.losses, "lr": self.lrs})

    def to_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False, float_format="%.10g")
        if self.val_losses:
            val_path = path.with_name(f"{path.stem}_val{path.suffix}")
            pd.DataFrame({
                "epoch": list(self.val_losses.keys()),
                "val_loss": list(self.val_losses.values()),
            }).to_csv(val_path, index=False, float_format="%.10g")
        return path

    def to_dict(self) -> Dict[str, Any]:
        return {
            "steps": list(self.steps),
            "losses": list(self.losses),
            "lrs": list(self.lrs),
            "val_losses": {str(k): v for k, v in self.val_losses.items()},
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "LossCurve":
        return cls(
            steps=list(data.get("steps", [])),
            losses=list(data.get("losses", [])),
            lrs=list(data.get("lrs", [])),
            val_losses={int(k): v for k, v in data.get("val_losses", {}).items()},
        )


class Trainer:
    """Runs one training job and writes checkpoints to ``output_dir``."""

    def __init__(
        self,
        model: nn.Module,
        config: TrainConfig,
        output_dir: Optional[Path] = None,
        device: str = "cpu",
    ):
        objective = objective_of(model)
        if objective != config.objective:
            raise InvalidConfigError(f"Model is a {objective} model but objective is {config.objective}")
        self.model = model.to(device)
        self.config = config
        self.output_dir = Path(output_dir) if output_dir else None
        self.device = device
        self.labels: Dict[str, int] = {}
        self.last_checkpoint: Optional[Path] = None
        self.log = PhenomLogger.training_logger(__name__)
        # Early-stopping state; saved with every checkpoint
        self.best_val = math.inf
        self.stale_epochs = 0

    # --------------------------------------------------
    # Loss
    # --------------------------------------------------
    def batch_loss(self, imgs: torch.Tensor, labels: torch.Tensor, mask_seeds: List[int]) -> torch.Tensor:
        cfg = self.config
        if cfg.objective == "WSL":
            logits, _ = self.model(imgs)
            return classification_loss(logits, labels)

        n_patches = self.model.config.n_patches
        if cfg.objective == "MAE":
            mask, ids_keep = masks_to_tensors(batch_masks(n_patches, cfg.mask_ratio, mask_seeds))
            recon = self.model(imgs, mask.to(self.device), ids_keep.to(self.device))
            return loss_combined(recon, cfg.alpha) if cfg.alpha is not None else loss_mae(recon)

        specs = [sample_channel_masks(imgs.shape[1], n_patches, cfg.mask_ratio, s) for s in mask_seeds]
        mask, ids_keep = channel_masks_to_tensors(specs)
        recons = self.model(imgs, mask.to(self.device), ids_keep.to(self.device))
        return ca_loss(recons, cfg.alpha)

    @torch.no_grad()
    def validation_loss(self, val_set: CenterCropDataset) -> float:
        self.model.eval()
        seeds = validation_mask_seeds(self.config.seed, len(val_set))
        total, count = 0.0, 0
        try:
            for start in range(0, len(val_set), self.config.batch_size):
                idx = range(start, min(start + self.config.batch_size, len(val_set)))
                items = [val_set[i] for i in idx]
                imgs = torch.stack([x for x, _ in items]).to(self.device)
                labels = torch.tensor([y for _, y in items], device=self.device)
                loss = self.batch_loss(imgs, labels, [seeds[i] for i in idx])
                total += float(loss.item()) * len(items)
                count += len(items)
        finally:
            self.model.train()
        return total / count

    # --------------------------------------------------
    # Loop
    # --------------------------------------------------
    def fit(
        self,
        images: Sequence[WellImage],
        val_images: Optional[Sequence[WellImage]] = None,
        resume_from: Optional[Path] = None,
    ) -> Tuple[nn.Module, LossCurve]:
        cfg = self.config
        if not images:
            raise EmptyInputError("Cannot train on an empty dataset")
        images = list(images)
        if val_images is None and cfg.val_fraction > 0:
            images, val_images = split_validation(images, cfg.val_fraction, cfg.seed)
        val_images = list(val_images or [])

        self.labels = label_index(images + val_images)
        if cfg.objective == "WSL" and len(self.labels) != self.model.n_classes:
            raise InvalidLabelError(
                f"Dataset has {len(self.labels)} perturbations but the classifier has {self.model.n_classes} classes"
            )

        crop_size = self.model.config.img_size
        dataset = CropDataset(images, crop_size, seed=cfg.seed, crops_per_image=cfg.crops_per_image,
                              augment=cfg.augment, labels=self.labels)
        if cfg.weighted_sampling:
            sampler = WeightedLabelSampler([dataset.label_of(i) for i in range(len(dataset))], seed=cfg.seed)
        else:
            sampler = EpochSampler(len(dataset), seed=cfg.seed)
        loader = DataLoader(
            dataset,
            batch_size=cfg.batch_size,
            sampler=sampler,
            num_workers=cfg.workers,
            generator=torch.Generator().manual_seed(cfg.seed),
        )
        val_set = CenterCropDataset(val_images, crop_size, self.labels) if val_images else None

        steps_per_epoch = math.ceil(len(dataset) / cfg.batch_size)
        total_steps = cfg.epochs * steps_per_epoch
        optimizer = build_optimizer(self.model.parameters(), cfg)

        torch.manual_seed(cfg.seed)
        curve = LossCurve()
        step, start_epoch = 0, 0
        self.best_val, self.stale_epochs = math.inf, 0
        if resume_from is not None:
            step, start_epoch, curve = self._resume(resume_from, optimizer)

        logger.info(
            f"Training {cfg.objective} on {len(dataset)} crops from {len(images)} wells: "
            f"{cfg.epochs} epochs x {steps_per_epoch} steps, batch {cfg.batch_size}"
        )
        self.model.train()
        for epoch in range(start_epoch, cfg.epochs):
            dataset.set_epoch(epoch)
            sampler.set_epoch(epoch)
            epoch_losses = []
            for imgs, labels in loader:
                imgs, labels = imgs.to(self.device), labels.to(self.device)
                lr = lr_at(step, total_steps, cfg)
                set_lr(optimizer, lr)
                optimizer.zero_grad(set_to_none=True)

                loss = self.batch_loss(imgs, labels, step_mask_seeds(cfg.seed, step, imgs.shape[0]))
                value = float(loss.item())
                if not math.isfinite(value):
                    raise TrainingDivergedError(
                        f"Loss is {value} at step {step} (epoch {epoch}, lr {lr:.3e}); "
                        f"last finite loss {curve.losses[-1] if len(curve) else 'n/a'}"
                    )
                curve.append(step, value, lr)
                self.log.at(epoch + 1, step).debug(f"loss {value:.6f} lr {lr:.3e}")

                loss.backward()
                optimizer.step()
                step += 1
                epoch_losses.append(value)

            summary = f"mean loss {sum(epoch_losses) / len(epoch_losses):.6f}"
            stop = False
            if val_set is not None:
                val_loss = self.validation_loss(val_set)
                curve.val_losses[epoch] = val_loss
                summary += f", val loss {val_loss:.6f}"
                if val_loss < self.best_val:
                    self.best_val, self.stale_epochs = val_loss, 0
                else:
                    self.stale_epochs += 1
                    stop = (cfg.early_stopping_patience is not None
                            and self.stale_epochs >= cfg.early_stopping_patience)
            self.log.at(epoch + 1).info(summary)

            last_epoch = stop or epoch + 1 == cfg.epochs
            if self.output_dir is not None and (cfg.checkpoint_every_epoch or last_epoch):
                checkpoint_path = self.output_dir / "checkpoints" / f"epoch_{epoch + 1:03d}.pt"
                self.last_checkpoint = self.save(checkpoint_path, optimizer, step, epoch + 1, curve)
            if stop:
                self.log.info(f"Early stopping: no validation improvement "
                              f"for {self.stale_epochs} epochs")
                break

        return self.model, curve

    def save(self, path: Path, optimizer: torch.optim.Optimizer, step: int, epoch: int, curve: LossCurve) -> Path:
        return save_checkpoint(
            path, self.model,
            step=step, epoch=epoch, optimizer=optimizer,
            loss_curve=curve.to_dict(),
            train_config=self.config.model_dump(mode="json"),
            labels=self.labels,
            rng_state=torch.get_rng_state(),
            early_stopping={"best_val": self.best_val, "stale_epochs": self.stale_epochs},
        )

    def _resume(self, path: Path, optimizer: torch.optim.Optimizer) -> Tuple[int, int, LossCurve]:
        checkpoint = load_checkpoint(path)
        if checkpoint.objective != self.config.objective:
            raise InvalidConfigError(
                f"Checkpoint objective {checkpoint.objective} does not match {self.config.objective}"
            )
        self.model.load_state_dict(checkpoint.model.state_dict())
        if checkpoint.optimizer_state is not None:
            optimizer.load_state_dict(checkpoint.optimizer_state)
        if checkpoint.rng_state is not None:
            torch.set_rng_state(checkpoint.rng_state)
        curve = LossCurve.from_dict(checkpoint.loss_curve or {})
        if checkpoint.early_stopping is not None:
            self.best_val = float(checkpoint.early_stopping["best_val"])
            self.stale_epochs = int(checkpoint.early_stopping["stale_epochs"])
        logger.info(f"Resumed from {path} at step {checkpoint.step}, epoch {checkpoint.epoch}")
        return checkpoint.step, checkpoint.epoch, curve


def fit(
    dataset: Sequence[WellImage],
    model: nn.Module,
    config: TrainConfig,
    output_dir: Optional[Path] = None,
    val_images: Optional[Sequence[WellImage]] = None,
    resume_from: Optional[Path] = None,
) -> Tuple[nn.Module, LossCurve]:
    """Train ``model`` on well images; returns the trained model and its loss curve."""
    return Trainer(model, config, output_dir).fit(dataset, val_images=val_images, resume_from=resume_from)
