"""One-cycle learning-rate schedule: linear warmup, then cosine decay to zero."""

import math

from phenom.core.exceptions import InvalidConfigError
from phenom.training.config import TrainConfig


def lr_at(step: int, total_steps: int, config: TrainConfig) -> float:
    """
    Learning rate for optimizer step ``step`` (0-based) of ``total_steps``.

    Ramps 0 -> max_lr over the first warmup_fraction * total_steps steps,
    then follows half a cosine from max_lr down to 0 at ``total_steps``.
    """
    if total_steps < 0 or not 0 <= step <= total_steps:
        raise InvalidConfigError(f"Step {step} is outside [0, {total_steps}]")
    if total_steps == 0:
        return 0.0
    warmup = config.warmup_fraction * total_steps
    if step < warmup:
        return config.max_lr * step / warmup
    progress = (step - warmup) / (total_steps - warmup)
    return config.max_lr * 0.5 * (1.0 + math.cos(math.pi * progress))
