"""Stochastic depth for residual blocks."""
from __future__ import annotations

from typing import Callable

import torch
from torch import nn


def _check_rate(rate: float) -> None:
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"stochastic depth rate must lie in [0, 1), got {rate}")


def drop_path(residual: torch.Tensor, rate: float, training: bool,
              generator: torch.Generator | None = None) -> torch.Tensor:
    """Zero the residual branch per sample with probability ``rate``.

    Surviving samples are scaled by ``1 / (1 - rate)`` so the expected output
    matches evaluation mode.
    """
    _check_rate(rate)
    if not training or rate == 0.0:
        return residual
    keep = 1.0 - rate
    shape = (residual.shape[0],) + (1,) * (residual.ndim - 1)
    u = torch.rand(shape, dtype=residual.dtype, device=residual.device, generator=generator)
    mask = (u >= rate).to(residual.dtype)
    return residual * mask / keep


def stochastic_depth_apply(block_fn: Callable[[torch.Tensor], torch.Tensor], x: torch.Tensor,
                           rate: float, training: bool,
                           generator: torch.Generator | None = None) -> torch.Tensor:
    """``x + block_fn(x)`` with the block skipped per sample at ``rate`` while training."""
    return x + drop_path(block_fn(x), rate, training, generator)


class DropPath(nn.Module):
    def __init__(self, rate: float = 0.0):
        super().__init__()
        _check_rate(rate)
        self.rate = rate

    def forward(self, x):
        return drop_path(x, self.rate, self.training)

    def extra_repr(self):
        return f"rate={self.rate}"
