"""
Lion and AdamW update rules.

The per-tensor update functions are shared by the ``Lion`` torch optimizer
and by the functional ``optimizer_step`` used for inspection and tests.
AdamW training goes through ``torch.optim.AdamW``; ``adamw_update``
reproduces its non-amsgrad rule.
"""

from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import torch

from phenom.core.exceptions import DimensionMismatchError
from phenom.core.logger import PhenomLogger
from phenom.training.config import TrainConfig

logger = PhenomLogger.get_logger(__name__)


@torch.no_grad()
def lion_update(
    param: torch.Tensor,
    grad: torch.Tensor,
    exp_avg: torch.Tensor,
    lr: float,
    beta1: float,
    beta2: float,
    weight_decay: float,
) -> None:
    """In place: decoupled decay, sign step on the interpolated momentum, momentum update."""
    param.mul_(1.0 - lr * weight_decay)
    direction = exp_avg.mul(beta1).add(grad, alpha=1.0 - beta1).sign_()
    param.add_(direction, alpha=-lr)
    exp_avg.mul_(beta2).add_(grad, alpha=1.0 - beta2)


@torch.no_grad()
def adamw_update(
    param: torch.Tensor,
    grad: torch.Tensor,
    exp_avg: torch.Tensor,
    exp_avg_sq: torch.Tensor,
    step: int,
    lr: float,
    beta1: float,
    beta2: float,
    weight_decay: float,
    eps: float,
) -> None:
    """In place AdamW step; ``step`` is the 1-based count after this update."""
    param.mul_(1.0 - lr * weight_decay)
    exp_avg.mul_(beta1).add_(grad, alpha=1.0 - beta1)
    exp_avg_sq.mul_(beta2).addcmul_(grad, grad, value=1.0 - beta2)
    bias_correction1 = 1.0 - beta1 ** step
    bias_correction2 = 1.0 - beta2 ** step
    denom = (exp_avg_sq.sqrt() / bias_correction2 ** 0.5).add_(eps)
    param.addcdiv_(exp_avg, denom, value=-lr / bias_correction1)


class Lion(torch.optim.Optimizer):
    """Sign-momentum optimizer with decoupled weight decay."""

    def __init__(self, params: Iterable, lr: float = 1e-4, betas: Tuple[float, float] = (0.9, 0.99),
                 weight_decay: float = 0.0):
        if lr < 0.0:
            raise ValueError(f"Invalid learning rate: {lr}")
        if not all(0.0 <= b < 1.0 for b in betas):
            raise ValueError(f"Invalid betas: {betas}")
        super().__init__(params, dict(lr=lr, betas=betas, weight_decay=weight_decay))

    @torch.no_grad()
    def step(self, closure=None):
        loss = None
        if closure is not None:
            with torch.enable_grad():
                loss = closure()
        for group in self.param_groups:
            beta1, beta2 = group["betas"]
            for p in group["params"]:
                if p.grad is None:
                    continue
                state = self.state[p]
                if not state:
                    state["exp_avg"] = torch.zeros_like(p)
                lion_update(p, p.grad, state["exp_avg"], group["lr"], beta1, beta2, group["weight_decay"])
        return loss


def build_optimizer(params: Iterable, config: TrainConfig) -> torch.optim.Optimizer:
    betas = (config.beta1, config.beta2)
    if config.optimizer == "LION":
        optimizer = Lion(params, lr=config.max_lr, betas=betas, weight_decay=config.weight_decay)
    else:
        optimizer = torch.optim.AdamW(params, lr=config.max_lr, betas=betas,
                                      weight_decay=config.weight_decay, eps=config.eps)
    logger.info(f"Using {config.optimizer} (betas={betas}, weight_decay={config.weight_decay})")
    return optimizer


def set_lr(optimizer: torch.optim.Optimizer, lr: float) -> None:
    for group in optimizer.param_groups:
        group["lr"] = lr


def optimizer_step(
    params: Sequence[np.ndarray],
    grads: Sequence[np.ndarray],
    state: Optional[Dict[str, Any]],
    config: TrainConfig,
    lr: Optional[float] = None,
) -> Tuple[List[np.ndarray], Dict[str, Any]]:
    """
    Functional single step on float64 arrays.

    Args:
        params: Parameter arrays
        grads: Gradients, same shapes as ``params``
        state: Output of a previous call, or None for a fresh optimizer
        config: Optimizer kind and hyperparameters
        lr: Step size; defaults to ``config.max_lr``

    Returns:
        New parameter arrays and new state. Inputs are not modified.
    """
    if len(params) != len(grads):
        raise DimensionMismatchError(f"{len(params)} parameters but {len(grads)} gradients")
    for i, (p, g) in enumerate(zip(params, grads)):
        if np.shape(p) != np.shape(g):
            raise DimensionMismatchError(f"Parameter {i} has shape {np.shape(p)}, gradient {np.shape(g)}")
    lr = config.max_lr if lr is None else lr
    state = state or {}
    step = int(state.get("step", 0)) + 1
    exp_avg = state.get("exp_avg") or [np.zeros(np.shape(p)) for p in params]
    exp_avg_sq = state.get("exp_avg_sq") or [np.zeros(np.shape(p)) for p in params]

    new_params, new_avg, new_avg_sq = [], [], []
    for p, g, m, v in zip(params, grads, exp_avg, exp_avg_sq):
        p_t = torch.tensor(np.asarray(p, dtype=np.float64))
        g_t = torch.tensor(np.asarray(g, dtype=np.float64))
        m_t = torch.tensor(np.asarray(m, dtype=np.float64))
        v_t = torch.tensor(np.asarray(v, dtype=np.float64))
        if config.optimizer == "LION":
            lion_update(p_t, g_t, m_t, lr, config.beta1, config.beta2, config.weight_decay)
        else:
            adamw_update(p_t, g_t, m_t, v_t, step, lr, config.beta1, config.beta2,
                         config.weight_decay, config.eps)
        new_params.append(p_t.numpy())
        new_avg.append(m_t.numpy())
        new_avg_sq.append(v_t.numpy())
    return new_params, {"step": step, "exp_avg": new_avg, "exp_avg_sq": new_avg_sq}
