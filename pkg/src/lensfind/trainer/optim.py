"""AdamW with decoupled weight decay, plateau LR schedule and early stopping."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import torch

IMPROVEMENT_THRESHOLD = 1e-8


@torch.no_grad()
def adamw_step(param: torch.Tensor, grad: torch.Tensor, state: dict, lr: float,
               weight_decay: float, betas=(0.9, 0.999), eps: float = 1e-8) -> None:
    """One in-place AdamW update of ``param``.

    ``state`` holds ``step``, ``exp_avg`` and ``exp_avg_sq``; missing entries
    are initialised to zero.  The decay ``-lr * weight_decay * w`` is applied
    to the weights directly and never enters the moment estimates.
    """
    if "step" not in state:
        state["step"] = 0
        state["exp_avg"] = torch.zeros_like(param)
        state["exp_avg_sq"] = torch.zeros_like(param)
    beta1, beta2 = betas
    state["step"] += 1
    t = state["step"]
    m, v = state["exp_avg"], state["exp_avg_sq"]

    param.mul_(1.0 - lr * weight_decay)
    m.mul_(beta1).add_(grad, alpha=1.0 - beta1)
    v.mul_(beta2).addcmul_(grad, grad, value=1.0 - beta2)

    bias1 = 1.0 - beta1**t
    bias2 = 1.0 - beta2**t
    denom = (v.sqrt() / math.sqrt(bias2)).add_(eps)
    param.addcdiv_(m, denom, value=-lr / bias1)


class AdamW(torch.optim.Optimizer):
    """Optimizer wrapper around :func:`adamw_step`."""

    def __init__(self, params, lr=1e-4, weight_decay=1e-2, betas=(0.9, 0.999), eps=1e-8):
        if lr < 0 or weight_decay < 0:
            raise ValueError("lr and weight_decay must be non-negative")
        super().__init__(params, dict(lr=lr, weight_decay=weight_decay, betas=betas, eps=eps))

    @torch.no_grad()
    def step(self, closure=None):
        loss = None
        if closure is not None:
            with torch.enable_grad():
                loss = closure()
        for group in self.param_groups:
            for p in group["params"]:
                if p.grad is None:
                    continue
                adamw_step(p, p.grad, self.state[p], group["lr"], group["weight_decay"],
                           group["betas"], group["eps"])
        return loss


def _improved(val_loss: float, best: float, threshold: float) -> bool:
    return val_loss < best - threshold


@dataclass(frozen=True)
class PlateauState:
    lr: float
    factor: float = 0.1
    patience: int = 5
    threshold: float = IMPROVEMENT_THRESHOLD
    best: float = math.inf
    num_bad_epochs: int = 0
    min_lr: float = 0.0


def plateau_scheduler_step(state: PlateauState, val_loss: float) -> tuple[float, PlateauState]:
    """Return the learning rate for the next epoch and the updated state.

    A stall counter resets on strict improvement; once it exceeds
    ``patience`` the rate is multiplied by ``factor`` and the counter resets.
    """
    if _improved(val_loss, state.best, state.threshold):
        state = replace(state, best=val_loss, num_bad_epochs=0)
    else:
        state = replace(state, num_bad_epochs=state.num_bad_epochs + 1)
    if state.num_bad_epochs > state.patience:
        state = replace(state, lr=max(state.lr * state.factor, state.min_lr), num_bad_epochs=0)
    return state.lr, state


@dataclass(frozen=True)
class EarlyStopState:
    patience: int = 20
    threshold: float = IMPROVEMENT_THRESHOLD
    best: float = math.inf
    best_epoch: int = -1
    epoch: int = -1
    num_bad_epochs: int = 0


def early_stop_check(state: EarlyStopState, val_loss: float) -> tuple[bool, EarlyStopState]:
    """``True`` once ``patience`` epochs have passed without improvement.

    The counter runs from the best epoch, so with patience 20 the stop fires
    on epoch ``best + 20``.
    """
    epoch = state.epoch + 1
    if _improved(val_loss, state.best, state.threshold):
        state = replace(state, best=val_loss, best_epoch=epoch, epoch=epoch, num_bad_epochs=0)
    else:
        state = replace(state, epoch=epoch, num_bad_epochs=state.num_bad_epochs + 1)
    return state.num_bad_epochs >= state.patience, state
