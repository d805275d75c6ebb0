"""Training-time augmentation and evaluation-time resize + normalize.

Training images go through the stack below, in this order:

    resize -> horizontal flip -> vertical flip -> rotation -> resized crop
           -> perspective -> gaussian blur -> tensor -> normalize

Each of the six augmentations fires independently with probability
``AugmentConfig.p_apply``.  Randomness comes from a ``numpy`` Generator
passed by the caller so a transform is a pure function of
(image, config, generator state).

FITS fluxes are unbounded, so by default each image is min-max scaled to
[0, 1] before any geometric operation (``input_scaling="minmax"``).
Exposed regions after rotation/perspective are filled with zeros and all
resampling is bilinear.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
import torch
from torchvision.transforms import InterpolationMode
from torchvision.transforms.v2 import functional as TF

from .data_ingest import RgbImage

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)

AUGMENTATIONS = ("hflip", "vflip", "rotation", "resized_crop", "perspective", "blur")
_BILINEAR = InterpolationMode.BILINEAR


@dataclass(frozen=True)
class NormalizationStats:
    mu: tuple[float, float, float] = IMAGENET_MEAN
    sigma: tuple[float, float, float] = IMAGENET_STD

    def __post_init__(self):
        if len(self.mu) != 3 or len(self.sigma) != 3:
            raise ValueError("mu and sigma need one value per RGB channel")
        if any(not s > 0 for s in self.sigma):
            raise ValueError(f"sigma must be strictly positive, got {self.sigma}")


IMAGENET_STATS = NormalizationStats()


@dataclass(frozen=True)
class AugmentConfig:
    target_side: int = 224
    p_apply: float = 0.5
    rotation_range: float = 30.0
    crop_scale: tuple[float, float] = (0.8, 1.2)
    crop_ratio: tuple[float, float] = (3 / 4, 4 / 3)
    perspective_distortion: float = 0.4
    blur_kernel: int = 5
    blur_sigma: tuple[float, float] = (0.1, 2.0)
    input_scaling: str = "minmax"
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.p_apply <= 1.0:
            raise ValueError(f"p_apply must lie in [0, 1], got {self.p_apply}")
        if self.blur_kernel % 2 == 0:
            raise ValueError("blur_kernel must be odd")
        if self.input_scaling not in ("minmax", "none"):
            raise ValueError("input_scaling must be 'minmax' or 'none'")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class AugmentParams:
    """Concrete draw for one image; ``None`` means the augmentation did not fire."""

    hflip: bool = False
    vflip: bool = False
    rotation: float | None = None
    resized_crop: tuple[int, int, int, int] | None = None  # top, left, height, width
    perspective: tuple[list, list] | None = None  # startpoints, endpoints
    blur: float | None = None
    fired: dict = field(default_factory=dict)


def sample_rng(seed: int, epoch: int, sample_index: int) -> np.random.Generator:
    """Independent stream per (seed, epoch, sample); worker-count agnostic."""
    return np.random.default_rng([seed, epoch, sample_index])


def normalize(x, stats: NormalizationStats = IMAGENET_STATS):
    """``(x - mu) / sigma`` per channel for a ``3 x ...`` tensor or array."""
    mu, sigma = _channel_stats(x, stats)
    return (x - mu) / sigma


def denormalize(x, stats: NormalizationStats = IMAGENET_STATS):
    mu, sigma = _channel_stats(x, stats)
    return x * sigma + mu


def _channel_stats(x, stats):
    if x.shape[0] != 3:
        raise ValueError(f"expected 3 channels in the leading axis, got shape {tuple(x.shape)}")
    shape = (3,) + (1,) * (x.ndim - 1)
    if isinstance(x, torch.Tensor):
        kw = dict(dtype=x.dtype, device=x.device)
        return torch.tensor(stats.mu, **kw).reshape(shape), torch.tensor(stats.sigma, **kw).reshape(shape)
    return np.asarray(stats.mu).reshape(shape), np.asarray(stats.sigma).reshape(shape)


def _to_chw(img: RgbImage, scaling: str) -> torch.Tensor:
    x = torch.from_numpy(np.ascontiguousarray(img.pixels, dtype=np.float32)).permute(2, 0, 1)
    if scaling == "minmax":
        lo, hi = x.min(), x.max()
        x = (x - lo) / (hi - lo) if hi > lo else torch.zeros_like(x)
    return x.contiguous()


def _resize(x: torch.Tensor, side: int) -> torch.Tensor:
    if x.shape[-1] == side and x.shape[-2] == side:
        return x
    return TF.resize(x, [side, side], interpolation=_BILINEAR, antialias=True)


def sample_augment_params(cfg: AugmentConfig, rng: np.random.Generator, side: int | None = None) -> AugmentParams:
    """Draw which augmentations fire and their parameters.

    ``side`` is the (square) image side the geometry refers to, normally
    ``cfg.target_side``.  Every augmentation consumes its Bernoulli draw and
    its parameter draws whether or not it fires, so the stream position does
    not depend on earlier outcomes.
    """
    side = side or cfg.target_side
    p = AugmentParams()
    fires = {name: bool(rng.random() < cfg.p_apply) for name in AUGMENTATIONS}
    p.fired = fires

    angle = float(rng.uniform(-cfg.rotation_range, cfg.rotation_range))
    crop = _sample_crop(cfg, rng, side)
    persp = _sample_perspective(cfg.perspective_distortion, rng, side)
    sigma = float(rng.uniform(*cfg.blur_sigma))

    p.hflip = fires["hflip"]
    p.vflip = fires["vflip"]
    p.rotation = angle if fires["rotation"] else None
    p.resized_crop = crop if fires["resized_crop"] else None
    p.perspective = persp if fires["perspective"] else None
    p.blur = sigma if fires["blur"] else None
    return p


def _sample_crop(cfg, rng, side):
    area = side * side
    # area fractions above 1 cannot be cut from the image; clamp to the full frame
    scale = min(float(rng.uniform(*cfg.crop_scale)), 1.0)
    log_r = np.log(cfg.crop_ratio)
    ratio = math.exp(float(rng.uniform(log_r[0], log_r[1])))
    w = int(round(math.sqrt(scale * area * ratio)))
    h = int(round(math.sqrt(scale * area / ratio)))
    w, h = min(max(w, 1), side), min(max(h, 1), side)
    top = int(rng.integers(0, side - h + 1))
    left = int(rng.integers(0, side - w + 1))
    return top, left, h, w


def _sample_perspective(distortion, rng, side):
    half = side // 2
    d = int(distortion * half)

    def jitter():
        return int(rng.integers(0, d + 1))

    tl = [jitter(), jitter()]
    tr = [side - 1 - jitter(), jitter()]
    br = [side - 1 - jitter(), side - 1 - jitter()]
    bl = [jitter(), side - 1 - jitter()]
    start = [[0, 0], [side - 1, 0], [side - 1, side - 1], [0, side - 1]]
    return start, [tl, tr, br, bl]


def apply_augment_params(x: torch.Tensor, p: AugmentParams, cfg: AugmentConfig) -> torch.Tensor:
    side = x.shape[-1]
    if p.hflip:
        x = TF.horizontal_flip(x)
    if p.vflip:
        x = TF.vertical_flip(x)
    if p.rotation is not None:
        x = TF.rotate(x, p.rotation, interpolation=_BILINEAR, fill=0.0)
    if p.resized_crop is not None:
        top, left, h, w = p.resized_crop
        x = TF.resized_crop(x, top, left, h, w, [side, side], interpolation=_BILINEAR, antialias=True)
    if p.perspective is not None:
        start, end = p.perspective
        x = TF.perspective(x, start, end, interpolation=_BILINEAR, fill=0.0)
    if p.blur is not None:
        k = cfg.blur_kernel
        x = TF.gaussian_blur(x, [k, k], [p.blur, p.blur])
    return x


def train_transform(img: RgbImage, cfg: AugmentConfig, rng: np.random.Generator,
                    stats: NormalizationStats = IMAGENET_STATS, return_params: bool = False):
    """Augmented, normalized ``3 x target_side x target_side`` float32 tensor."""
    x = _resize(_to_chw(img, cfg.input_scaling), cfg.target_side)
    params = sample_augment_params(cfg, rng, cfg.target_side)
    x = apply_augment_params(x, params, cfg)
    out = normalize(x, stats)
    return (out, params) if return_params else out


def eval_transform(img: RgbImage, stats: NormalizationStats = IMAGENET_STATS,
                   target_side: int = 224, input_scaling: str = "minmax") -> torch.Tensor:
    """Resize (bilinear) and normalize; no augmentation."""
    x = _resize(_to_chw(img, input_scaling), target_side)
    return normalize(x, stats)
