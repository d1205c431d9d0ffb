"""
Checkpoint save/load for all three model families.

A checkpoint is a ``torch.save`` dict holding the architecture as JSON,
the objective, the model state dict and, when written by the trainer,
optimizer state, step/epoch counters, the loss curve and the torch RNG
state so that a resumed run continues exactly.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Union

import torch
import torch.nn as nn

from phenom.core.exceptions import FormatError
from phenom.core.logger import PhenomLogger
from phenom.models.ca_mae import ChannelAgnosticMAE
from phenom.models.classifier import ViTClassifier
from phenom.models.config import ViTConfig
from phenom.models.mae import MaskedAutoencoderViT

logger = PhenomLogger.get_logger(__name__)

CHECKPOINT_SCHEMA = "phenom.checkpoint/v1"
OBJECTIVES = ("MAE", "CA_MAE", "WSL")


@dataclass
class Checkpoint:
    model: nn.Module
    objective: str
    model_config: ViTConfig
    step: int = 0
    epoch: int = 0
    optimizer_state: Optional[Dict[str, Any]] = None
    loss_curve: Optional[Dict[str, Any]] = None
    train_config: Optional[Dict[str, Any]] = None
    labels: Dict[str, int] = field(default_factory=dict)
    rng_state: Optional[torch.Tensor] = None
    early_stopping: Optional[Dict[str, float]] = None

    @property
    def channel_agnostic(self) -> bool:
        return self.objective == "CA_MAE"


def objective_of(model: nn.Module) -> str:
    if isinstance(model, ChannelAgnosticMAE):
        return "CA_MAE"
    if isinstance(model, ViTClassifier):
        return "WSL"
    if isinstance(model, MaskedAutoencoderViT):
        return "MAE"
    raise FormatError(f"Cannot checkpoint model of type {type(model).__name__}")


def build_model(objective: str, config: ViTConfig, n_classes: int = 0) -> nn.Module:
    """Untrained model for an objective; WSL needs ``n_classes``."""
    if objective == "MAE":
        return MaskedAutoencoderViT(config)
    if objective == "CA_MAE":
        return ChannelAgnosticMAE(config)
    if objective == "WSL":
        return ViTClassifier(config, n_classes)
    raise FormatError(f"Unknown objective {objective!r}; expected one of {OBJECTIVES}")


def save_checkpoint(
    path: Union[str, Path],
    model: nn.Module,
    step: int = 0,
    epoch: int = 0,
    optimizer: Optional[torch.optim.Optimizer] = None,
    loss_curve: Optional[Dict[str, Any]] = None,
    train_config: Optional[Dict[str, Any]] = None,
    labels: Optional[Dict[str, int]] = None,
    rng_state: Optional[torch.Tensor] = None,
    early_stopping: Optional[Dict[str, float]] = None,
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    objective = objective_of(model)
    payload = {
        "schema": CHECKPOINT_SCHEMA,
        "objective": objective,
        "channel_agnostic": objective == "CA_MAE",
        "model_config": model.config.model_dump_json(),
        "n_classes": getattr(model, "n_classes", 0),
        "labels": json.dumps(labels or {}, sort_keys=True),
        "state_dict": model.state_dict(),
        "optimizer_state": optimizer.state_dict() if optimizer is not None else None,
        "step": int(step),
        "epoch": int(epoch),
        "loss_curve": json.dumps(loss_curve) if loss_curve is not None else None,
        "train_config": json.dumps(train_config) if train_config is not None else None,
        "rng_state": rng_state,
        "early_stopping": json.dumps(early_stopping) if early_stopping is not None else None,
    }
    torch.save(payload, path)
    logger.info(f"Saved {objective} checkpoint at step {step} (epoch {epoch}) to {path}")
    return path


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Checkpoint not found: {path}")
    try:
        payload = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as e:
        raise FormatError(f"Unreadable checkpoint {path}: {e}") from e
    if not isinstance(payload, dict) or payload.get("schema") != CHECKPOINT_SCHEMA:
        raise FormatError(f"{path} is not a {CHECKPOINT_SCHEMA} checkpoint")

    config = ViTConfig.model_validate_json(payload["model_config"])
    model = build_model(payload["objective"], config, payload.get("n_classes", 0))
    model.load_state_dict(payload["state_dict"])
    model.eval()

    loss_curve = payload.get("loss_curve")
    train_config = payload.get("train_config")
    early_stopping = payload.get("early_stopping")
    return Checkpoint(
        model=model,
        objective=payload["objective"],
        model_config=config,
        step=payload["step"],
        epoch=payload["epoch"],
        optimizer_state=payload.get("optimizer_state"),
        loss_curve=json.loads(loss_curve) if loss_curve else None,
        train_config=json.loads(train_config) if train_config else None,
        labels=json.loads(payload.get("labels") or "{}"),
        rng_state=payload.get("rng_state"),
        early_stopping=json.loads(early_stopping) if early_stopping else None,
    )
