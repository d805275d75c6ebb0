"""Parameter and multiply-accumulate counts.

MACs are measured by ``torch.utils.flop_counter.FlopCounterMode`` on a
single-image forward pass, which counts matmuls, convolutions and attention
kernels (2 FLOPs per MAC) and ignores elementwise ops, norms and softmax.
Reports carry both ``macs`` and ``flops = 2 * macs``.
"""
from __future__ import annotations

import torch
from torch.utils.flop_counter import FlopCounterMode

from .registry import BackboneHandle, create_backbone

COUNTING_CONVENTION = (
    "macs: multiply-accumulates of matmul/conv/attention for one 3xSxS image "
    "(torch FlopCounterMode / 2); flops = 2 * macs; elementwise ops excluded"
)


def count_parameters(handle: BackboneHandle, trainable_only: bool = False) -> int:
    """Sum over the handle's parameter groups."""
    return sum(p.numel() for g in handle.param_groups for p in g.params.values()
               if p.requires_grad or not trainable_only)


def estimate_flops(handle: BackboneHandle, input_side: int | None = None) -> int:
    """MAC count of one forward pass at ``input_side`` (default: the handle's)."""
    side = input_side or handle.input_side
    p = next(handle.module.parameters())
    x = torch.zeros(1, 3, side, side, dtype=p.dtype, device=p.device)
    was = handle.module.training
    handle.module.eval()
    try:
        # grad mode stays on: the module tracker rejects no-grad views of parameters (CaiT cls_token)
        with FlopCounterMode(display=False) as counter:
            handle(x)
    finally:
        handle.module.train(was)
    return counter.get_total_flops() // 2


def complexity_row(name: str, variant: str = "full", input_side: int | None = None) -> dict:
    """Parameters and MACs of a freshly built (meta-device) model."""
    handle = create_backbone(name, variant=variant, image_side=input_side, device="meta")
    macs = estimate_flops(handle, input_side)
    return dict(model=name, params=count_parameters(handle), macs=macs, flops=2 * macs)
