"""Backbone registry, parameter groups and fine-tuning depths.

Every architecture is split into ordered parameter groups::

    embedding, unit 1 .. unit n, head

where a *unit* is a transformer block for isotropic models and a stage for
hierarchical/convolutional ones.  Final normalization layers join the last
unit, class/distillation tokens join the unit that consumes them, and the
head group is the bare classifier.  Fine-tuning depth 1 trains the head,
depth 2 the head plus the last ceil(n/2) units, depth 3 everything.
"""
from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Protocol

import torch
from torch import nn

from .toy import ToyMixer, ToyMixerConfig, ToyViT, ToyViTConfig

FAMILIES = ("isotropic-block", "hierarchical-stage", "convolutional")
CORE_MODELS = ("vit", "deit", "cait", "deit3", "swin", "twins_svt", "twins_pcpvt", "pit", "cvt", "mlp_mixer")
BASELINE_MODELS = ("resnet18",)
MODEL_NAMES = CORE_MODELS + BASELINE_MODELS

DISPLAY_NAMES = {
    "vit": "ViT", "deit": "DeiT", "cait": "CaiT", "deit3": "DeiT III", "swin": "Swin",
    "twins_svt": "Twins-SVT", "twins_pcpvt": "Twins-PCPVT", "pit": "PiT", "cvt": "CvT",
    "mlp_mixer": "MLP-Mixer", "resnet18": "ResNet-18",
}


class BackboneError(Exception):
    pass


class UnknownBackboneError(BackboneError, KeyError):
    pass


class WeightsUnavailableError(BackboneError):
    pass


class HeadMismatchError(BackboneError):
    pass


class FinetunePolicy(enum.IntEnum):
    HEAD_ONLY = 1
    HALF = 2
    FULL = 3


# ---------------------------------------------------------------------------
# parameter grouping rules: (regex, kind, order, fixed index)
# kind is one of embedding / unit / tail / head; units sort on (order, index)

_VIT_RULES = [
    (r"^(cls_token|pos_embed|reg_token|dist_token)$", "embedding", 0, None),
    (r"^patch_embed\.", "embedding", 0, None),
    (r"^blocks\.(\d+)\.", "unit", 0, None),
    (r"^(norm|fc_norm)\.", "tail", 0, None),
    (r"^(head|head_dist)\.", "head", 0, None),
]
_CAIT_RULES = [
    (r"^pos_embed$", "embedding", 0, None),
    (r"^patch_embed\.", "embedding", 0, None),
    (r"^blocks\.(\d+)\.", "unit", 0, None),
    (r"^blocks_token_only\.(\d+)\.", "unit", 1, None),
    # the class token enters at the first class-attention block
    (r"^cls_token$", "unit", 1, 0),
    (r"^norm\.", "tail", 0, None),
    (r"^head\.", "head", 0, None),
]
_SWIN_RULES = [
    (r"^patch_embed\.", "embedding", 0, None),
    (r"^layers\.(\d+)\.", "unit", 0, None),
    (r"^norm\.", "tail", 0, None),
    (r"^head\.", "head", 0, None),
]
_TWINS_RULES = [
    (r"^patch_embeds\.0\.", "embedding", 0, None),
    (r"^(?:patch_embeds|pos_block|blocks)\.(\d+)\.", "unit", 0, None),
    (r"^norm\.", "tail", 0, None),
    (r"^head\.", "head", 0, None),
]
_PIT_RULES = [
    (r"^(cls_token|pos_embed)$", "embedding", 0, None),
    (r"^patch_embed\.", "embedding", 0, None),
    (r"^transformers\.(\d+)\.", "unit", 0, None),
    (r"^norm\.", "tail", 0, None),
    (r"^(head|head_dist)\.", "head", 0, None),
]
_CVT_RULES = [
    # stage 1 owns the first convolutional token embedding
    (r"^cvt\.encoder\.stages\.(\d+)\.", "unit", 0, None),
    (r"^layernorm\.", "tail", 0, None),
    (r"^classifier\.", "head", 0, None),
]
_MIXER_RULES = [
    (r"^stem\.", "embedding", 0, None),
    (r"^blocks\.(\d+)\.", "unit", 0, None),
    (r"^norm\.", "tail", 0, None),
    (r"^head\.", "head", 0, None),
]
_RESNET_RULES = [
    (r"^(conv1|bn1)\.", "embedding", 0, None),
    (r"^layer(\d+)\.", "unit", 0, None),
    (r"^fc\.", "head", 0, None),
]
_TOY_VIT_RULES = _VIT_RULES


def _classify(name: str, rules) -> tuple[str, tuple[int, int] | None]:
    for pattern, kind, order, fixed in rules:
        m = re.match(pattern, name)
        if m:
            if kind != "unit":
                return kind, None
            idx = fixed if fixed is not None else int(m.group(1))
            return kind, (order, idx)
    raise BackboneError(f"parameter {name!r} matches no grouping rule")


# ---------------------------------------------------------------------------
# builders


def _timm(model_id: str, **overrides):
    def build(num_classes: int, drop_path_rate: float, image_side=None, **extra):
        import timm
        return timm.create_model(model_id, pretrained=False, num_classes=num_classes,
                                 drop_path_rate=drop_path_rate, **{**overrides, **extra})
    return build


def _cvt_config(num_classes, drop_path_rate, toy):
    from transformers import CvtConfig
    kw = dict(num_labels=num_classes, drop_path_rate=[0.0, 0.0, drop_path_rate])
    if toy:
        # HF indexes per-layer drop rates by stage number: depth[s] must exceed s
        kw.update(embed_dim=[16, 32, 48], num_heads=[1, 2, 3], depth=[1, 2, 3], mlp_ratio=[2.0, 2.0, 2.0])
    return CvtConfig(**kw)


def _cvt(toy: bool):
    def build(num_classes: int, drop_path_rate: float, **_):
        from transformers import CvtForImageClassification
        return CvtForImageClassification(_cvt_config(num_classes, drop_path_rate, toy))
    return build


def _toy_vit(num_classes, drop_path_rate, image_side=32, **_):
    return ToyViT(ToyViTConfig(image_side=image_side, num_classes=num_classes,
                               stochastic_depth_rate=drop_path_rate))


def _toy_mixer(num_classes, drop_path_rate, image_side=32, **_):
    return ToyMixer(ToyMixerConfig(image_side=image_side, num_classes=num_classes,
                                   stochastic_depth_rate=drop_path_rate))


def _with_side(build):
    """timm toy builders take the input side as ``img_size``."""
    def wrapped(num_classes, drop_path_rate, image_side=32, **_):
        return build(num_classes, drop_path_rate, img_size=image_side)
    return wrapped


_TOY_TRANSFORMER = dict(patch_size=8, embed_dim=32, depth=4, num_heads=4, mlp_ratio=2.0)


@dataclass(frozen=True)
class RegistryEntry:
    name: str
    family: str
    pretrained_id: str
    build_full: Callable
    build_toy: Callable
    rules: list
    full_rules: list | None = None
    hf: bool = False

    def rules_for(self, variant: str):
        return self.full_rules if (variant == "full" and self.full_rules) else self.rules


REGISTRY: dict[str, RegistryEntry] = {e.name: e for e in [
    RegistryEntry("vit", "isotropic-block", "vit_base_patch16_224.augreg2_in21k_ft_in1k",
                  _timm("vit_base_patch16_224"), _toy_vit, _TOY_VIT_RULES, _VIT_RULES),
    RegistryEntry("deit", "isotropic-block", "deit_base_patch16_224.fb_in1k",
                  _timm("deit_base_patch16_224"),
                  _with_side(_timm("deit_base_patch16_224", **_TOY_TRANSFORMER)), _VIT_RULES),
    RegistryEntry("cait", "isotropic-block", "cait_s24_224.fb_dist_in1k",
                  _timm("cait_s24_224"),
                  _with_side(_timm("cait_xxs24_224", patch_size=8, embed_dim=32, depth=2,
                                   depth_token_only=2, num_heads=4)), _CAIT_RULES),
    RegistryEntry("deit3", "isotropic-block", "deit3_base_patch16_224.fb_in22k_ft_in1k",
                  _timm("deit3_base_patch16_224"),
                  _with_side(_timm("deit3_small_patch16_224", **_TOY_TRANSFORMER)), _VIT_RULES),
    RegistryEntry("swin", "hierarchical-stage", "swin_base_patch4_window7_224.ms_in22k_ft_in1k",
                  _timm("swin_base_patch4_window7_224"),
                  _with_side(_timm("swin_tiny_patch4_window7_224", patch_size=2, window_size=4,
                                   embed_dim=16, depths=(1, 1, 2, 1), num_heads=(1, 2, 2, 4))),
                  _SWIN_RULES),
    RegistryEntry("twins_svt", "hierarchical-stage", "twins_svt_base.in1k",
                  _timm("twins_svt_base"),
                  _with_side(_timm("twins_svt_small", patch_size=4, embed_dims=(16, 32, 48, 64),
                                   num_heads=(1, 2, 2, 4), depths=(1, 1, 2, 1), wss=(2, 2, 2, 2),
                                   sr_ratios=(4, 2, 1, 1), mlp_ratios=(2, 2, 2, 2))),
                  _TWINS_RULES),
    RegistryEntry("twins_pcpvt", "hierarchical-stage", "twins_pcpvt_base.in1k",
                  _timm("twins_pcpvt_base"),
                  _with_side(_timm("twins_pcpvt_small", patch_size=4, embed_dims=(16, 32, 48, 64),
                                   num_heads=(1, 2, 2, 4), depths=(1, 1, 2, 1),
                                   sr_ratios=(4, 2, 1, 1), mlp_ratios=(2, 2, 2, 2))),
                  _TWINS_RULES),
    RegistryEntry("pit", "hierarchical-stage", "pit_b_224.in1k",
                  _timm("pit_b_224"),
                  _with_side(_timm("pit_ti_224", patch_size=4, stride=2, base_dims=[16, 16, 16],
                                   depth=[1, 2, 1], heads=[1, 2, 4])),
                  _PIT_RULES),
    RegistryEntry("cvt", "hierarchical-stage", "microsoft/cvt-13",
                  _cvt(toy=False), _cvt(toy=True), _CVT_RULES, hf=True),
    RegistryEntry("mlp_mixer", "isotropic-block", "mixer_b16_224.goog_in21k_ft_in1k",
                  _timm("mixer_b16_224"), _toy_mixer, _MIXER_RULES),
    RegistryEntry("resnet18", "convolutional", "resnet18.a1_in1k",
                  _timm("resnet18"), _timm("resnet18", channels=(8, 16, 32, 64), stem_width=8),
                  _RESNET_RULES),
]}


# ---------------------------------------------------------------------------
# weights


class WeightProvider(Protocol):
    def state_dict(self, entry: RegistryEntry) -> dict[str, torch.Tensor]: ...


class LocalWeightProvider:
    """Reads ``<root>/<identifier with '/' replaced by '__'>.pt``."""

    def __init__(self, root):
        self.root = Path(root)

    def path_for(self, identifier: str) -> Path:
        return self.root / (identifier.replace("/", "__") + ".pt")

    def state_dict(self, entry: RegistryEntry) -> dict[str, torch.Tensor]:
        path = self.path_for(entry.pretrained_id)
        if not path.is_file():
            raise WeightsUnavailableError(f"no local weights for {entry.pretrained_id!r} at {path}")
        return torch.load(path, map_location="cpu", weights_only=True)


class HubWeightProvider:
    """Downloads through timm (or Hugging Face for CvT)."""

    def state_dict(self, entry: RegistryEntry) -> dict[str, torch.Tensor]:
        try:
            if entry.hf:
                from transformers import CvtForImageClassification
                return CvtForImageClassification.from_pretrained(entry.pretrained_id).state_dict()
            import timm
            return timm.create_model(entry.pretrained_id, pretrained=True).state_dict()
        except Exception as exc:  # network, missing hub entry, ...
            raise WeightsUnavailableError(f"cannot resolve weights {entry.pretrained_id!r}: {exc}") from exc


# ---------------------------------------------------------------------------
# handles


@dataclass
class ParamGroup:
    name: str
    kind: str  # embedding | unit | head
    params: dict[str, nn.Parameter] = field(default_factory=dict)

    def numel(self) -> int:
        return sum(p.numel() for p in self.params.values())


@dataclass
class BackboneHandle:
    name: str
    family: str
    module: nn.Module
    param_groups: list[ParamGroup]
    num_classes: int = 2
    variant: str = "full"
    input_side: int = 224
    pretrained_source: str | None = None
    hf: bool = False
    policy: FinetunePolicy | None = None

    def __call__(self, x: torch.Tensor) -> torch.Tensor:
        if self.hf:
            return self.module(pixel_values=x).logits
        return self.module(x)

    @property
    def units(self) -> list[ParamGroup]:
        return [g for g in self.param_groups if g.kind == "unit"]

    @property
    def head(self) -> ParamGroup:
        return self.param_groups[-1]

    def group(self, name: str) -> ParamGroup:
        for g in self.param_groups:
            if g.name == name:
                return g
        raise KeyError(name)

    def manifest(self) -> dict:
        return dict(architecture=self.name, family=self.family, variant=self.variant,
                    num_classes=self.num_classes, input_side=self.input_side,
                    pretrained_source=self.pretrained_source,
                    finetune_depth=None if self.policy is None else int(self.policy))


def build_param_groups(module: nn.Module, rules, family: str) -> list[ParamGroup]:
    unit_word = "block" if family == "isotropic-block" else "stage"
    embedding = ParamGroup("embedding", "embedding")
    head = ParamGroup("head", "head")
    units: dict[tuple[int, int], dict] = {}
    tail: dict[str, nn.Parameter] = {}
    for name, p in module.named_parameters():
        kind, key = _classify(name, rules)
        if kind == "embedding":
            embedding.params[name] = p
        elif kind == "head":
            head.params[name] = p
        elif kind == "tail":
            tail[name] = p
        else:
            units.setdefault(key, {})[name] = p
    if not units:
        raise BackboneError("architecture has no blocks or stages")
    ordered = [ParamGroup(f"{unit_word}{i + 1}", "unit", units[k]) for i, k in enumerate(sorted(units))]
    ordered[-1].params.update(tail)
    if not head.params:
        raise BackboneError("architecture has no classification head parameters")
    groups = ([embedding] if embedding.params else []) + ordered + [head]
    return groups


def create_backbone(name: str, pretrained: bool = False, num_classes: int = 2, *,
                    variant: str = "full", image_side: int | None = None,
                    drop_path_rate: float = 0.1, weights: WeightProvider | None = None,
                    device: str | torch.device | None = None) -> BackboneHandle:
    """Build a classifier with a fresh ``num_classes`` head.

    ``variant="full"`` gives the Base-size (or named) architecture at 224 px;
    ``variant="toy"`` a desk-scale model of the same family (``image_side``
    defaults to 32).  Pretrained weights are only defined for the full
    variant and are fetched through ``weights`` (a :class:`WeightProvider`).
    """
    if name not in REGISTRY:
        raise UnknownBackboneError(f"unknown backbone {name!r}; known: {', '.join(MODEL_NAMES)}")
    if num_classes < 2:
        raise HeadMismatchError(f"num_classes must be >= 2, got {num_classes}")
    if variant not in ("full", "toy"):
        raise ValueError("variant must be 'full' or 'toy'")
    entry = REGISTRY[name]
    if variant == "full":
        if image_side not in (None, 224):
            raise ValueError("the full variant expects 224 px inputs")
        image_side = 224
    else:
        image_side = image_side or 32
        if pretrained:
            raise WeightsUnavailableError("pretrained weights exist only for the full variant")

    build = entry.build_full if variant == "full" else entry.build_toy
    if device is not None:
        with torch.device(device):
            module = build(num_classes, drop_path_rate, image_side=image_side)
    else:
        module = build(num_classes, drop_path_rate, image_side=image_side)

    source = None
    if pretrained:
        provider = weights or HubWeightProvider()
        load_pretrained(module, provider.state_dict(entry), entry)
        source = entry.pretrained_id

    groups = build_param_groups(module, entry.rules_for(variant), entry.family)
    handle = BackboneHandle(name, entry.family, module, groups, num_classes, variant, image_side,
                            source, hf=entry.hf)
    _check_head(handle)
    return handle


def load_pretrained(module: nn.Module, state: dict[str, torch.Tensor], entry: RegistryEntry) -> None:
    """Load everything except the classifier, which keeps its fresh init."""
    own = module.state_dict()
    head_keys = {k for k in own if _classify(k, entry.rules)[0] == "head"} if own else set()
    filtered = {k: v for k, v in state.items() if k not in head_keys and not _is_head_name(k, entry)}
    shape_bad = [k for k, v in filtered.items() if k in own and own[k].shape != v.shape]
    if shape_bad:
        raise WeightsUnavailableError(f"weights for {entry.name} do not fit: {shape_bad[:3]}")
    result = module.load_state_dict(filtered, strict=False)
    missing = [k for k in result.missing_keys if k not in head_keys]
    if missing:
        raise WeightsUnavailableError(f"weights for {entry.name} lack {len(missing)} tensors, e.g. {missing[0]}")


def _is_head_name(key: str, entry: RegistryEntry) -> bool:
    try:
        return _classify(key, entry.rules)[0] == "head"
    except BackboneError:
        return False


def _check_head(handle: BackboneHandle) -> None:
    outs = [p.shape[0] for n, p in handle.head.params.items() if n.endswith("weight")]
    if not outs or any(o != handle.num_classes for o in outs):
        raise HeadMismatchError(f"{handle.name}: head produces {outs} outputs, expected {handle.num_classes}")


# ---------------------------------------------------------------------------
# freezing


@dataclass(frozen=True)
class FreezePartition:
    trainable: tuple[str, ...]
    frozen: tuple[str, ...]


def trainable_group_names(handle: BackboneHandle, policy: FinetunePolicy | int) -> list[str]:
    policy = FinetunePolicy(policy)
    names = [g.name for g in handle.param_groups]
    if policy is FinetunePolicy.FULL:
        return names
    if policy is FinetunePolicy.HEAD_ONLY:
        return [handle.head.name]
    units = handle.units
    keep = math.ceil(len(units) / 2)
    return [g.name for g in units[len(units) - keep:]] + [handle.head.name]


def apply_finetune_policy(handle: BackboneHandle, policy: FinetunePolicy | int) -> FreezePartition:
    """Set ``requires_grad`` per group and return the (trainable, frozen) split."""
    policy = FinetunePolicy(policy)
    train_names = set(trainable_group_names(handle, policy))
    trainable, frozen = [], []
    for g in handle.param_groups:
        on = g.name in train_names
        for p in g.params.values():
            p.requires_grad_(on)
        (trainable if on else frozen).append(g.name)
    handle.policy = policy
    return FreezePartition(tuple(trainable), tuple(frozen))
