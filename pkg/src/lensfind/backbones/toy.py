"""Reference ViT and MLP-Mixer, small enough to gradient-check on a laptop.

Both follow the published layouts (pre-norm blocks, class-token head for the
ViT, global average pooling for the Mixer) so the same classes scale up to
the Base configurations.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Mapping

import torch
from torch import nn
from torch.func import functional_call

from ..trainer.stochastic_depth import DropPath


@dataclass(frozen=True)
class ToyViTConfig:
    image_side: int = 32
    patch_size: int = 8
    embed_dim: int = 32
    depth: int = 4
    heads: int = 4
    mlp_dim: int = 64
    stochastic_depth_rate: float = 0.1
    num_classes: int = 2
    in_chans: int = 3

    def __post_init__(self):
        if self.image_side % self.patch_size:
            raise ValueError(f"image_side {self.image_side} not divisible by patch_size {self.patch_size}")
        if self.embed_dim % self.heads:
            raise ValueError("embed_dim must be divisible by heads")

    @property
    def num_patches(self) -> int:
        return (self.image_side // self.patch_size) ** 2

    def to_dict(self):
        return asdict(self)


# ViT-Base/16 at 224 px with a 2-class head
VIT_BASE = ToyViTConfig(image_side=224, patch_size=16, embed_dim=768, depth=12, heads=12, mlp_dim=3072)


@dataclass(frozen=True)
class ToyMixerConfig:
    image_side: int = 32
    patch_size: int = 8
    embed_dim: int = 32
    depth: int = 4
    token_mlp_dim: int = 16
    channel_mlp_dim: int = 64
    stochastic_depth_rate: float = 0.1
    num_classes: int = 2
    in_chans: int = 3

    def __post_init__(self):
        if self.image_side % self.patch_size:
            raise ValueError(f"image_side {self.image_side} not divisible by patch_size {self.patch_size}")

    @property
    def num_patches(self) -> int:
        return (self.image_side // self.patch_size) ** 2

    def to_dict(self):
        return asdict(self)


MIXER_BASE = ToyMixerConfig(image_side=224, patch_size=16, embed_dim=768, depth=12,
                            token_mlp_dim=384, channel_mlp_dim=3072)


class PatchEmbed(nn.Module):
    def __init__(self, patch_size, in_chans, embed_dim):
        super().__init__()
        self.proj = nn.Conv2d(in_chans, embed_dim, kernel_size=patch_size, stride=patch_size)

    def forward(self, x):
        return self.proj(x).flatten(2).transpose(1, 2)  # B, T, D


class Mlp(nn.Module):
    def __init__(self, dim, hidden):
        super().__init__()
        self.fc1 = nn.Linear(dim, hidden)
        self.act = nn.GELU()
        self.fc2 = nn.Linear(hidden, dim)

    def forward(self, x):
        return self.fc2(self.act(self.fc1(x)))


class Attention(nn.Module):
    def __init__(self, dim, heads):
        super().__init__()
        self.heads = heads
        self.scale = (dim // heads) ** -0.5
        self.qkv = nn.Linear(dim, 3 * dim)
        self.proj = nn.Linear(dim, dim)

    def forward(self, x):
        B, T, D = x.shape
        qkv = self.qkv(x).reshape(B, T, 3, self.heads, D // self.heads).permute(2, 0, 3, 1, 4)
        q, k, v = qkv.unbind(0)
        attn = (q @ k.transpose(-2, -1) * self.scale).softmax(dim=-1)
        out = (attn @ v).transpose(1, 2).reshape(B, T, D)
        return self.proj(out), attn


class ViTBlock(nn.Module):
    def __init__(self, dim, heads, mlp_dim, drop_path_rate):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim, eps=1e-6)
        self.attn = Attention(dim, heads)
        self.norm2 = nn.LayerNorm(dim, eps=1e-6)
        self.mlp = Mlp(dim, mlp_dim)
        self.drop_path = DropPath(drop_path_rate)

    def forward(self, x):
        a, attn = self.attn(self.norm1(x))
        x = x + self.drop_path(a)
        x = x + self.drop_path(self.mlp(self.norm2(x)))
        return x, attn


class ToyViT(nn.Module):
    def __init__(self, cfg: ToyViTConfig = ToyViTConfig()):
        super().__init__()
        self.cfg = cfg
        D = cfg.embed_dim
        self.patch_embed = PatchEmbed(cfg.patch_size, cfg.in_chans, D)
        self.cls_token = nn.Parameter(torch.zeros(1, 1, D))
        self.pos_embed = nn.Parameter(torch.randn(1, cfg.num_patches + 1, D) * 0.02)
        self.blocks = nn.ModuleList(
            ViTBlock(D, cfg.heads, cfg.mlp_dim, cfg.stochastic_depth_rate) for _ in range(cfg.depth)
        )
        self.norm = nn.LayerNorm(D, eps=1e-6)
        self.head = nn.Linear(D, cfg.num_classes)
        nn.init.normal_(self.cls_token, std=0.02)

    def forward(self, x, return_attention: bool = False):
        side = self.cfg.image_side
        if x.ndim != 4 or x.shape[1] != self.cfg.in_chans or x.shape[-2:] != (side, side):
            raise ValueError(f"expected input B x {self.cfg.in_chans} x {side} x {side}, got {tuple(x.shape)}")
        tokens = self.patch_embed(x)
        cls = self.cls_token.expand(x.shape[0], -1, -1)
        h = torch.cat([cls, tokens], dim=1) + self.pos_embed
        maps = []
        for blk in self.blocks:
            h, attn = blk(h)
            maps.append(attn)
        logits = self.head(self.norm(h)[:, 0])
        return (logits, maps) if return_attention else logits


class MixerBlock(nn.Module):
    def __init__(self, num_tokens, dim, token_mlp_dim, channel_mlp_dim, drop_path_rate):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim, eps=1e-6)
        self.token_mlp = Mlp(num_tokens, token_mlp_dim)
        self.norm2 = nn.LayerNorm(dim, eps=1e-6)
        self.channel_mlp = Mlp(dim, channel_mlp_dim)
        self.drop_path = DropPath(drop_path_rate)

    def forward(self, x):  # B, T, C
        # token mixing acts across patches, one channel at a time
        x = x + self.drop_path(self.token_mlp(self.norm1(x).transpose(1, 2)).transpose(1, 2))
        x = x + self.drop_path(self.channel_mlp(self.norm2(x)))
        return x


class ToyMixer(nn.Module):
    def __init__(self, cfg: ToyMixerConfig = ToyMixerConfig()):
        super().__init__()
        self.cfg = cfg
        self.stem = PatchEmbed(cfg.patch_size, cfg.in_chans, cfg.embed_dim)
        self.blocks = nn.ModuleList(
            MixerBlock(cfg.num_patches, cfg.embed_dim, cfg.token_mlp_dim, cfg.channel_mlp_dim,
                       cfg.stochastic_depth_rate)
            for _ in range(cfg.depth)
        )
        self.norm = nn.LayerNorm(cfg.embed_dim, eps=1e-6)
        self.head = nn.Linear(cfg.embed_dim, cfg.num_classes)

    def forward_features(self, x):
        """Token features right before pooling, ``B x T x C``."""
        side = self.cfg.image_side
        if x.ndim != 4 or x.shape[1] != self.cfg.in_chans or x.shape[-2:] != (side, side):
            raise ValueError(f"expected input B x {self.cfg.in_chans} x {side} x {side}, got {tuple(x.shape)}")
        h = self.stem(x)
        for blk in self.blocks:
            h = blk(h)
        return self.norm(h)

    @staticmethod
    def pool(tokens):
        return tokens.mean(dim=1)

    def forward(self, x):
        return self.head(self.pool(self.forward_features(x)))


def _run(model: nn.Module, batch, params: Mapping[str, torch.Tensor] | None, training: bool, **kw):
    was = model.training
    model.train(training)
    try:
        if params is None:
            return model(batch, **kw)
        return functional_call(model, dict(params), (batch,), kw)
    finally:
        model.train(was)


def toy_vit_forward(batch, model: ToyViT, params=None, training: bool = False):
    """``(logits, attention maps)``; ``params`` optionally overrides the module's tensors."""
    return _run(model, batch, params, training, return_attention=True)


def toy_mixer_forward(batch, model: ToyMixer, params=None, training: bool = False):
    return _run(model, batch, params, training)
