import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from lensfind.augment import (
    AUGMENTATIONS, IMAGENET_STATS, AugmentConfig, AugmentParams, NormalizationStats, apply_augment_params,
    denormalize, eval_transform, normalize, sample_augment_params, sample_rng, train_transform,
)
from lensfind.data_ingest import RgbImage

MU = np.array([0.485, 0.456, 0.406])
SIGMA = np.array([0.229, 0.224, 0.225])


def _img(side, seed=0):
    return RgbImage(np.random.default_rng(seed).normal(size=(side, side, 3)).astype(np.float32))


def test_default_stats():
    assert IMAGENET_STATS.mu == (0.485, 0.456, 0.406)
    assert IMAGENET_STATS.sigma == (0.229, 0.224, 0.225)


@pytest.mark.parametrize("side", [64, 72, 101])
def test_output_shape_invariant(side):
    cfg = AugmentConfig(p_apply=1.0)
    out = train_transform(_img(side), cfg, sample_rng(0, 0, 0))
    assert out.shape == (3, 224, 224) and out.dtype == torch.float32
    assert eval_transform(_img(side)).shape == (3, 224, 224)


def test_72_to_224():
    out = train_transform(_img(72), AugmentConfig(), sample_rng(1, 2, 3))
    assert tuple(out.shape[-2:]) == (224, 224)


def test_p_zero_equals_eval():
    img = _img(72)
    a = train_transform(img, AugmentConfig(p_apply=0.0), sample_rng(0, 0, 0))
    b = eval_transform(img)
    assert torch.equal(a, b)


def test_fixed_seed_is_bit_identical():
    img = _img(72)
    cfg = AugmentConfig(p_apply=0.7)
    a = train_transform(img, cfg, sample_rng(5, 1, 9))
    b = train_transform(img, cfg, sample_rng(5, 1, 9))
    assert torch.equal(a, b)
    c = train_transform(img, cfg, sample_rng(5, 1, 10))
    assert not torch.equal(a, c)


@pytest.mark.parametrize("flip", ["hflip", "vflip"])
def test_flip_involution(flip):
    x = torch.rand(3, 16, 16)
    p = AugmentParams(**{flip: True})
    cfg = AugmentConfig(p_apply=1.0)
    once = apply_augment_params(x, p, cfg)
    assert not torch.equal(once, x)
    assert torch.equal(apply_augment_params(once, p, cfg), x)


def test_fire_rate():
    cfg = AugmentConfig()
    rng = np.random.default_rng(123)
    n = 10_000
    counts = dict.fromkeys(AUGMENTATIONS, 0)
    for _ in range(n):
        p = sample_augment_params(cfg, rng, 224)
        for k, v in p.fired.items():
            counts[k] += v
    for k, c in counts.items():
        assert abs(c / n - 0.5) <= 0.02, (k, c / n)


def test_fire_independence():
    # pairwise joint frequency close to 0.25 for p = 0.5
    cfg = AugmentConfig()
    rng = np.random.default_rng(7)
    draws = np.array([[sample_augment_params(cfg, rng, 64).fired[k] for k in AUGMENTATIONS] for _ in range(4000)])
    joint = (draws[:, :, None] & draws[:, None, :]).mean(axis=0)
    off = joint[~np.eye(len(AUGMENTATIONS), dtype=bool)]
    assert np.all(np.abs(off - 0.25) < 0.03)


def test_crop_window_within_image():
    cfg = AugmentConfig(p_apply=1.0)
    rng = np.random.default_rng(0)
    for _ in range(500):
        top, left, h, w = sample_augment_params(cfg, rng, 224).resized_crop
        assert 0 <= top and 0 <= left and top + h <= 224 and left + w <= 224
        assert 0 < h <= 224 and 0 < w <= 224


def test_constant_image_passes_through():
    img = RgbImage(np.full((72, 72, 3), 3.0, np.float32))
    cfg = AugmentConfig(p_apply=0.0)
    out = train_transform(img, cfg, sample_rng(0, 0, 0))
    assert torch.isfinite(out).all()


# --- normalization ----------------------------------------------------------


def test_mu_maps_to_zero_and_mu_plus_sigma_to_one():
    x = torch.tensor(MU, dtype=torch.float64).reshape(3, 1, 1).expand(3, 4, 4)
    assert torch.allclose(normalize(x), torch.zeros(3, 4, 4, dtype=torch.float64), atol=1e-12)
    y = torch.tensor(MU + SIGMA, dtype=torch.float64).reshape(3, 1, 1).expand(3, 4, 4)
    assert torch.allclose(normalize(y), torch.ones(3, 4, 4, dtype=torch.float64), atol=1e-12)


def test_zero_pixel_value():
    out = normalize(np.zeros((3, 1, 1))).ravel()
    np.testing.assert_allclose(np.round(out, 4), [-2.1179, -2.0357, -1.8044])
    # oracle: direct evaluation of (0 - mu) / sigma
    np.testing.assert_allclose(out, -MU / SIGMA)


def test_eval_transform_zero_pixel():
    # with scaling off a zero image stays zero through resize
    out = eval_transform(RgbImage(np.zeros((72, 72, 3), np.float32)), input_scaling="none")
    np.testing.assert_allclose(out[:, 0, 0].numpy(), [-2.1179, -2.0357, -1.8044], atol=1e-4)


def test_mu_plus_two_sigma():
    x = (MU + 2 * SIGMA).reshape(3, 1, 1)
    np.testing.assert_allclose(normalize(x).ravel(), [2.0, 2.0, 2.0], rtol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_denormalize_inverts(seed):
    x = torch.from_numpy(np.random.default_rng(seed).normal(size=(3, 5, 5)))
    assert torch.allclose(denormalize(normalize(x)), x, atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.floats(-10, 10), st.floats(-10, 10), st.integers(0, 1000))
def test_normalize_is_affine(a, b, seed):
    x = np.random.default_rng(seed).uniform(size=(3, 4, 4))
    direct = (a * x + b - MU[:, None, None]) / SIGMA[:, None, None]
    np.testing.assert_allclose(normalize(a * x + b), direct, rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("sigma", [(0.0, 0.2, 0.2), (0.2, -0.1, 0.2)])
def test_nonpositive_sigma_rejected(sigma):
    with pytest.raises(ValueError, match="sigma"):
        NormalizationStats(sigma=sigma)


def test_config_validation():
    with pytest.raises(ValueError):
        AugmentConfig(p_apply=1.5)
    with pytest.raises(ValueError):
        AugmentConfig(input_scaling="log")


def test_default_config_values():
    cfg = AugmentConfig()
    assert (cfg.target_side, cfg.p_apply, cfg.rotation_range) == (224, 0.5, 30.0)
    assert cfg.crop_scale == (0.8, 1.2)
    assert cfg.perspective_distortion == 0.4
    assert cfg.blur_kernel == 5 and cfg.blur_sigma == (0.1, 2.0)
