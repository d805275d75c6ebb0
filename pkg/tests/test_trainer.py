import hashlib
import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st
from torch.utils.data import TensorDataset

from lensfind.augment import AugmentConfig
from lensfind.backbones import create_backbone
from lensfind.data_ingest import DataCatalog, DatasetSpec, build_training_set
from lensfind.trainer import (
    AdamW, DropPath, EarlyStopState, EpochStats, NonFiniteLossError, PlateauState, TrainConfig, TrainingError,
    adamw_step, drop_path, early_stop_check, load_checkpoint, plateau_scheduler_step, predict, read_history,
    save_checkpoint, stochastic_depth_apply, train,
)
from lensfind.trainer import loop


def _separable(n=50, side=16, seed=0):
    g = torch.Generator().manual_seed(seed)
    y = torch.arange(n) % 2
    x = torch.randn(n, 3, side, side, generator=g) * 0.3
    x += (2.0 * y - 1.0).view(-1, 1, 1, 1)  # class shifts the mean intensity
    return TensorDataset(x, y)


def _toy(name="vit", side=16, rate=0.1):
    return create_backbone(name, variant="toy", image_side=side, drop_path_rate=rate)


def _hash(params):
    h = hashlib.sha256()
    for p in params:
        h.update(p.detach().cpu().numpy().tobytes())
    return h.hexdigest()


# --- config -----------------------------------------------------------------


def test_train_config_defaults():
    c = TrainConfig()
    assert (c.lr, c.weight_decay, c.plateau_factor, c.plateau_patience) == (1e-4, 1e-2, 0.1, 5)
    assert (c.early_stop_patience, c.max_epochs, c.batch_size, c.stochastic_depth_rate) == (20, 100, 128, 0.1)
    assert c.mixed_precision is False


@pytest.mark.parametrize("kw", [dict(plateau_factor=1.0), dict(plateau_factor=0.0),
                                dict(plateau_patience=20), dict(stochastic_depth_rate=1.0),
                                dict(lr=0.0), dict(max_epochs=0)])
def test_train_config_rejects(kw):
    with pytest.raises(ValueError):
        TrainConfig(**kw)


# --- AdamW ------------------------------------------------------------------


def test_adamw_without_decay_equals_adam():
    torch.manual_seed(0)
    w0 = torch.randn(5, dtype=torch.float64)
    a, b = w0.clone().requires_grad_(), w0.clone().requires_grad_()
    ours, ref = AdamW([a], lr=1e-2, weight_decay=0.0), torch.optim.Adam([b], lr=1e-2)
    for _ in range(20):
        g = torch.randn(5, dtype=torch.float64)
        a.grad, b.grad = g.clone(), g.clone()
        ours.step()
        ref.step()
    assert torch.allclose(a, b, rtol=0, atol=1e-14)


def test_adamw_matches_torch_adamw():
    torch.manual_seed(1)
    w0 = torch.randn(7, dtype=torch.float64)
    a, b = w0.clone().requires_grad_(), w0.clone().requires_grad_()
    ours, ref = AdamW([a], lr=1e-3, weight_decay=1e-2), torch.optim.AdamW([b], lr=1e-3, weight_decay=1e-2)
    for _ in range(30):
        g = torch.randn(7, dtype=torch.float64)
        a.grad, b.grad = g.clone(), g.clone()
        ours.step()
        ref.step()
    assert torch.allclose(a, b, rtol=0, atol=1e-14)


@settings(max_examples=25, deadline=None)
@given(st.floats(1e-5, 1e-2), st.floats(1e-4, 1e-1), st.integers(1, 30))
def test_zero_gradient_decay_recurrence(lr, wd, steps):
    w = torch.tensor([1.5, -2.0], dtype=torch.float64)
    state = {}
    for _ in range(steps):
        adamw_step(w, torch.zeros_like(w), state, lr, wd)
    expected = torch.tensor([1.5, -2.0], dtype=torch.float64) * (1 - lr * wd) ** steps
    assert torch.allclose(w, expected, rtol=1e-12, atol=0)


def test_first_step_moves_by_lr():
    w = torch.tensor([1.0], dtype=torch.float64)
    adamw_step(w, torch.tensor([1.0], dtype=torch.float64), {}, 1e-4, 0.0)
    # bias-corrected m/sqrt(v) = 1, so the step is lr / (1 + eps)
    assert math.isclose(1.0 - w.item(), 1e-4 / (1 + 1e-8), rel_tol=1e-10)


# --- plateau scheduler ------------------------------------------------------


def _run_plateau(losses, lr=1e-4):
    state = PlateauState(lr=lr)
    lrs = []
    for v in losses:
        lr, state = plateau_scheduler_step(state, v)
        lrs.append(lr)
    return lrs


def test_plateau_monotone_improvement():
    assert _run_plateau([1.0, 0.9, 0.8]) == [1e-4] * 3


def test_plateau_reduces_at_sixth_stall():
    lrs = _run_plateau([1.0] + [1.0] * 6)
    assert lrs[:6] == [1e-4] * 6
    assert math.isclose(lrs[6], 1e-5)


def test_two_plateaus():
    lrs = _run_plateau([1.0] + [1.0] * 12)
    assert math.isclose(lrs[-1], 1e-6)
    assert math.isclose(lrs[7], 1e-5) and math.isclose(lrs[6], 1e-5)


def test_plateau_improvement_is_strict_with_threshold():
    # a decrease smaller than 1e-8 counts as a stall
    lrs = _run_plateau([1.0] + [1.0 - 1e-9 * k for k in range(1, 7)])
    assert math.isclose(lrs[-1], 1e-5)


# --- early stopping ---------------------------------------------------------


def _first_stop(losses, patience=20):
    state = EarlyStopState(patience=patience)
    for epoch, v in enumerate(losses):
        stop, state = early_stop_check(state, v)
        if stop:
            return epoch
    return None


def test_early_stop_at_best_plus_20():
    best = 7
    losses = [1.0 - 0.01 * e for e in range(best + 1)] + [1.0] * 40
    assert _first_stop(losses) == best + 20


def test_improvement_at_best_plus_19_resets():
    losses = [1.0] + [1.0] * 18 + [0.5] + [0.5] * 20
    # best at 0, improvement at 19, then stop at 19 + 20
    assert _first_stop(losses) == 39


def test_decreasing_loss_never_stops():
    assert _first_stop([1.0 / (e + 1) for e in range(100)]) is None


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0.0, 2.0), min_size=1, max_size=80))
def test_early_stop_counts_from_best_epoch(losses):
    stop = _first_stop(losses)
    # brute-force oracle: first epoch where 20 epochs passed since the last strict improvement
    best, best_epoch, expected = math.inf, -1, None
    for e, v in enumerate(losses):
        if v < best - 1e-8:
            best, best_epoch = v, e
        if e - best_epoch >= 20:
            expected = e
            break
    assert stop == expected


# --- stochastic depth -------------------------------------------------------


def test_eval_mode_is_exact_residual():
    x = torch.randn(10, 4)

    def f(t):
        return 3 * t + 1

    outs = [stochastic_depth_apply(f, x, 0.5, training=False) for _ in range(5)]
    for o in outs:
        assert torch.equal(o, x + f(x))


def test_rate_zero_is_plain_residual():
    x = torch.randn(10, 4)
    for training in (True, False):
        assert torch.equal(stochastic_depth_apply(torch.tanh, x, 0.0, training), x + torch.tanh(x))


def test_skip_frequency():
    g = torch.Generator().manual_seed(0)
    out = drop_path(torch.ones(100_000, 1, dtype=torch.float64), 0.1, True, g)
    skipped = (out == 0).double().mean().item()
    assert abs(skipped - 0.1) <= 0.005
    assert torch.allclose(out[out != 0], torch.full_like(out[out != 0], 1 / 0.9))


def test_expectation_preserved_for_linear_block():
    rate, a = 0.3, 2.5
    x = torch.tensor([[1.7]], dtype=torch.float64)
    # two outcomes: skipped (x) or kept (x + a x / (1 - rate))
    expected = rate * x + (1 - rate) * (x + a * x / (1 - rate))
    assert torch.allclose(expected, x + a * x)
    g = torch.Generator().manual_seed(3)
    xs = x.expand(200_000, 1)
    mean = stochastic_depth_apply(lambda t: a * t, xs, rate, True, g).mean()
    assert abs(mean.item() - (x + a * x).item()) < 0.02


def test_rate_at_least_one_rejected():
    with pytest.raises(ValueError):
        drop_path(torch.ones(2), 1.0, True)
    with pytest.raises(ValueError):
        DropPath(1.2)


def test_per_sample_draws():
    g = torch.Generator().manual_seed(0)
    out = drop_path(torch.ones(64, 5), 0.5, True, g)
    rows = out.unique(dim=0)
    assert rows.shape[0] == 2  # each sample is either fully dropped or fully kept


# --- training loop ----------------------------------------------------------


def test_frozen_parameters_unchanged():
    h = _toy()
    ds = _separable(32)
    head = list(h.head.params.values())
    body = [p for g in h.param_groups[:-1] for p in g.params.values()]
    before_body, before_head = _hash(body), _hash(head)
    train(h, 1, ds, ds, TrainConfig(max_epochs=3, batch_size=8, lr=1e-2))
    assert _hash(body) == before_body
    assert _hash(head) != before_head


def test_half_depth_freezes_early_blocks():
    h = _toy()
    ds = _separable(16)
    frozen = [p for g in h.param_groups if g.name in ("embedding", "block1", "block2") for p in g.params.values()]
    before = _hash(frozen)
    train(h, 2, ds, ds, TrainConfig(max_epochs=2, batch_size=8, lr=1e-2))
    assert _hash(frozen) == before
    assert all(p.requires_grad for p in h.group("block3").params.values())


def test_linear_probe_confirms_separability():
    from sklearn.linear_model import LogisticRegression
    ds = _separable()
    x, y = ds.tensors
    probe = LogisticRegression(max_iter=1000).fit(x.flatten(1).numpy(), y.numpy())
    assert probe.score(x.flatten(1).numpy(), y.numpy()) == 1.0


def test_toy_vit_overfits_separable_set():
    torch.manual_seed(0)
    h = _toy(rate=0.0)
    ds = _separable()
    accs = []
    rec = train(h, 3, ds, ds, TrainConfig(max_epochs=100, batch_size=16, lr=1e-3),
                on_epoch=lambda tr, va: accs.append(tr.accuracy))
    assert max(accs) == 1.0
    assert rec.epochs_run <= 100


def test_improving_history_runs_max_epochs(monkeypatch):
    calls = {"val": 0}

    def fake_epoch(handle, loader, epoch, split, lr, optimizer=None, scaler=None, mixed=False):
        if split == "val":
            calls["val"] += 1
            return EpochStats(epoch, split, 1.0 / (epoch + 1), 0.5, 0.5, 0.5, lr)
        return EpochStats(epoch, split, 1.0, 0.5, 0.5, 0.5, lr)

    monkeypatch.setattr(loop, "_run_epoch", fake_epoch)
    ds = _separable(4)
    rec = train(_toy(), 3, ds, ds, TrainConfig(max_epochs=30, early_stop_patience=20))
    assert calls["val"] == 30 and rec.epochs_run == 30 and not rec.stopped_early
    assert rec.best_epoch == 29
    assert {h.lr for h in rec.history} == {1e-4}


def test_stalled_history_stops_early(monkeypatch):
    def fake_epoch(handle, loader, epoch, split, lr, optimizer=None, scaler=None, mixed=False):
        return EpochStats(epoch, split, 1.0, 0.5, 0.5, 0.5, lr)

    monkeypatch.setattr(loop, "_run_epoch", fake_epoch)
    ds = _separable(4)
    rec = train(_toy(), 3, ds, ds, TrainConfig(max_epochs=100))
    assert rec.stopped_early and rec.best_epoch == 0 and rec.epochs_run == 21
    lrs = [h.lr for h in rec.history if h.split == "val"]
    assert math.isclose(lrs[6], 1e-4) and math.isclose(lrs[7], 1e-5)
    assert math.isclose(lrs[13], 1e-6)


def test_history_file_and_checkpoint_invariant(tmp_path):
    h = _toy()
    ds = _separable(24)
    val = _separable(12, seed=1)
    rec = train(h, 3, ds, val, TrainConfig(max_epochs=4, batch_size=8, lr=1e-3), history_path=tmp_path / "h.csv")
    header = (tmp_path / "h.csv").read_text().splitlines()[0]
    assert header == "epoch,split,loss,accuracy,auc,f1,lr"
    assert read_history(tmp_path / "h.csv") == rec.history
    assert rec.best_val_loss == min(rec.val_losses())
    assert rec.val_losses()[rec.best_epoch] == rec.best_val_loss
    # restored weights reproduce the best validation loss
    x, y = val.tensors
    h.module.eval()
    with torch.no_grad():
        loss = torch.nn.functional.cross_entropy(h(x), y).item()
    assert math.isclose(loss, rec.best_val_loss, rel_tol=1e-5)


def test_non_finite_loss_diagnostic():
    h = _toy()
    with torch.no_grad():
        h.module.head.bias.fill_(float("nan"))
    ds = _separable(8)
    with pytest.raises(NonFiniteLossError) as info:
        train(h, 1, ds, ds, TrainConfig(max_epochs=2, batch_size=4, lr=3e-4))
    assert (info.value.epoch, info.value.batch, info.value.lr) == (0, 0, 3e-4)
    assert "epoch 0" in str(info.value)


def test_no_trainable_parameters_rejected():
    h = _toy()
    for p in h.module.parameters():
        p.requires_grad_(False)
    ds = _separable(4)
    with pytest.raises(TrainingError):
        train(h, None, ds, ds, TrainConfig(max_epochs=1))


def test_same_seed_same_history(toy_archive):
    root, counts = toy_archive
    tr, va = build_training_set(DatasetSpec("A"), DataCatalog.from_root(root), counts)
    cfg = TrainConfig(max_epochs=2, batch_size=8, seed=4)
    aug = AugmentConfig(seed=4)
    hists = []
    for _ in range(2):
        torch.manual_seed(11)
        h = _toy()
        hists.append(train(h, 3, tr, va, cfg, augment=aug).history)
    for a, b in zip(*hists):
        for k in ("loss", "accuracy", "f1", "lr"):
            assert abs(getattr(a, k) - getattr(b, k)) <= 1e-6


def test_checkpoint_round_trip(tmp_path):
    h = _toy()
    ds = _separable(8)
    rec = train(h, 2, ds, ds, TrainConfig(max_epochs=2, batch_size=4, lr=1e-3))
    save_checkpoint(tmp_path, h, rec, experiment="A", dataset="A-train", seed=3)
    other = _toy()
    meta = load_checkpoint(tmp_path, other)
    assert meta["architecture"] == "vit" and meta["finetune_depth"] == 2
    assert meta["dataset"] == "A-train" and meta["seed"] == 3
    assert meta["best_epoch"] == rec.best_epoch
    for k, v in h.module.state_dict().items():
        assert torch.equal(v, other.module.state_dict()[k])
    np.testing.assert_array_equal(predict(h, ds), predict(other, ds))
    with pytest.raises(TrainingError):
        load_checkpoint(tmp_path, _toy("mlp_mixer"))


def test_predict_returns_probabilities():
    scores = predict(_toy(), _separable(10))
    assert scores.shape == (10,) and np.all((scores >= 0) & (scores <= 1))
