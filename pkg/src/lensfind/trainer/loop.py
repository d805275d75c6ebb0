"""Fine-tuning loop: AdamW, plateau schedule, early stopping, best checkpoint."""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np
import torch
import torch.nn.functional as F
from torch.utils.data import DataLoader, Dataset

from ..augment import IMAGENET_STATS, AugmentConfig, NormalizationStats, eval_transform, sample_rng, train_transform
from ..backbones.registry import BackboneHandle, FinetunePolicy, apply_finetune_policy
from ..data_ingest import LabeledDataset
from ..metrics import DEFAULT_THRESHOLD, UndefinedAUCError, confusion_at, f1_score, roc_and_auc
from .optim import AdamW, EarlyStopState, PlateauState, early_stop_check, plateau_scheduler_step

log = logging.getLogger(__name__)

HISTORY_COLUMNS = ("epoch", "split", "loss", "accuracy", "auc", "f1", "lr")


class TrainingError(RuntimeError):
    pass


class NonFiniteLossError(TrainingError):
    def __init__(self, epoch: int, batch: int, lr: float, loss: float):
        self.epoch, self.batch, self.lr, self.loss = epoch, batch, lr, loss
        super().__init__(f"non-finite loss {loss} at epoch {epoch}, batch {batch}, lr {lr:g}")


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-4
    weight_decay: float = 1e-2
    plateau_factor: float = 0.1
    plateau_patience: int = 5
    early_stop_patience: int = 20
    max_epochs: int = 100
    batch_size: int = 128
    stochastic_depth_rate: float = 0.1
    mixed_precision: bool = False
    seed: int = 0
    num_workers: int = 0

    def __post_init__(self):
        if not 0.0 < self.plateau_factor < 1.0:
            raise ValueError("plateau_factor must lie in (0, 1)")
        if not self.plateau_patience < self.early_stop_patience:
            raise ValueError("plateau_patience must be smaller than early_stop_patience")
        if not 0.0 <= self.stochastic_depth_rate < 1.0:
            raise ValueError("stochastic_depth_rate must lie in [0, 1)")
        if self.lr <= 0 or self.weight_decay < 0:
            raise ValueError("lr must be positive and weight_decay non-negative")
        if self.max_epochs < 1 or self.batch_size < 1:
            raise ValueError("max_epochs and batch_size must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class EpochStats:
    epoch: int
    split: str
    loss: float
    accuracy: float
    auc: float
    f1: float
    lr: float

    def row(self) -> dict:
        return asdict(self)


@dataclass
class CheckpointRecord:
    """Best-validation-loss snapshot and the full per-epoch history."""

    best_val_loss: float
    best_epoch: int
    state_dict: dict[str, torch.Tensor]
    history: list[EpochStats] = field(default_factory=list)
    stopped_early: bool = False

    @property
    def epochs_run(self) -> int:
        return 1 + max((h.epoch for h in self.history), default=-1)

    def val_losses(self) -> list[float]:
        return [h.loss for h in self.history if h.split == "val"]


# ---------------------------------------------------------------------------
# data


class ImageDataset(Dataset):
    """Tensors for a :class:`LabeledDataset`.

    With an :class:`AugmentConfig` each item is augmented from the stream
    ``sample_rng(cfg.seed, epoch, index)``; without one items are resized and
    normalized only, and cached after the first load.
    """

    def __init__(self, data: LabeledDataset, stats: NormalizationStats = IMAGENET_STATS,
                 target_side: int = 224, augment: AugmentConfig | None = None):
        self.data = data
        self.stats = stats
        self.target_side = target_side
        self.augment = None if augment is None else replace(augment, target_side=target_side)
        self.epoch = 0
        self._cache: dict[int, torch.Tensor] = {}

    def set_epoch(self, epoch: int) -> None:
        self.epoch = epoch

    def __len__(self):
        return len(self.data)

    def __getitem__(self, i):
        label = int(self.data.samples[i].label)
        if self.augment is not None:
            rng = sample_rng(self.augment.seed, self.epoch, i)
            return train_transform(self.data.image(i), self.augment, rng, self.stats), label
        if i not in self._cache:
            self._cache[i] = eval_transform(self.data.image(i), self.stats, self.target_side,
                                            input_scaling="minmax")
        return self._cache[i], label


def as_torch_dataset(data, stats=IMAGENET_STATS, target_side=224, augment=None) -> Dataset:
    if isinstance(data, LabeledDataset):
        return ImageDataset(data, stats, target_side, augment)
    return data


def _loader(ds: Dataset, batch_size: int, shuffle: bool, seed: int, epoch: int, workers: int):
    g = torch.Generator().manual_seed(int(np.random.SeedSequence([seed, epoch]).generate_state(1)[0]))
    return DataLoader(ds, batch_size=batch_size, shuffle=shuffle, generator=g, num_workers=workers)


# ---------------------------------------------------------------------------
# loop


def _summary(epoch, split, loss_sum, n, scores, labels, lr) -> EpochStats:
    scores, labels = np.asarray(scores, dtype=float), np.asarray(labels, dtype=int)
    cm = confusion_at((scores, labels), DEFAULT_THRESHOLD)
    try:
        auc = roc_and_auc((scores, labels))[1]
    except UndefinedAUCError:
        auc = float("nan")
    return EpochStats(epoch, split, loss_sum / n, cm.accuracy, auc, f1_score(cm), lr)


def _lens_scores(logits: torch.Tensor) -> torch.Tensor:
    return logits.detach().float().softmax(dim=-1)[:, 1]


def _autocast(enabled: bool, device: torch.device):
    dtype = torch.bfloat16 if device.type == "cpu" else torch.float16
    return torch.autocast(device_type=device.type, dtype=dtype, enabled=enabled)


def _device(handle: BackboneHandle) -> torch.device:
    return next(handle.module.parameters()).device


def _dtype(handle: BackboneHandle) -> torch.dtype:
    return next(handle.module.parameters()).dtype


def _run_epoch(handle, loader, epoch, split, lr, optimizer=None, scaler=None, mixed=False):
    training = optimizer is not None
    handle.module.train(training)
    device, dtype = _device(handle), _dtype(handle)
    loss_sum, n, scores, labels = 0.0, 0, [], []
    ctx = torch.enable_grad() if training else torch.no_grad()
    with ctx:
        for b, (x, y) in enumerate(loader):
            x = x.to(device=device, dtype=dtype)
            y = torch.as_tensor(y, device=device, dtype=torch.long)
            with _autocast(mixed, device):
                logits = handle(x)
                loss = F.cross_entropy(logits.float(), y)
            if not torch.isfinite(loss):
                raise NonFiniteLossError(epoch, b, lr, float(loss))
            if training:
                optimizer.zero_grad(set_to_none=True)
                if scaler is not None:
                    scaler.scale(loss).backward()
                    scaler.step(optimizer)
                    scaler.update()
                else:
                    loss.backward()
                    optimizer.step()
            loss_sum += float(loss.detach()) * len(y)
            n += len(y)
            scores.append(_lens_scores(logits).cpu().numpy())
            labels.append(y.cpu().numpy())
    return _summary(epoch, split, loss_sum, n, np.concatenate(scores), np.concatenate(labels), lr)


def train(handle: BackboneHandle, policy: FinetunePolicy | int | None, train_set, val_set,
          cfg: TrainConfig = TrainConfig(), *, augment: AugmentConfig | None = None,
          stats: NormalizationStats = IMAGENET_STATS, history_path=None,
          restore_best: bool = True,
          on_epoch: Callable[[EpochStats, EpochStats], None] | None = None) -> CheckpointRecord:
    """Fine-tune ``handle`` and return its best-validation-loss checkpoint.

    ``train_set``/``val_set`` are :class:`LabeledDataset` objects (loaded and
    transformed at the handle's input side) or torch datasets yielding
    ``(tensor, label)``.  ``augment`` applies to the training split only.
    Only parameters left trainable by ``policy`` enter the optimizer.
    """
    if policy is not None:
        apply_finetune_policy(handle, policy)
    trainable = [p for p in handle.module.parameters() if p.requires_grad]
    if not trainable:
        raise TrainingError("no trainable parameters")
    train_ds = as_torch_dataset(train_set, stats, handle.input_side, augment)
    val_ds = as_torch_dataset(val_set, stats, handle.input_side, None)
    if len(train_ds) == 0 or len(val_ds) == 0:
        raise TrainingError("train and val sets must be non-empty")

    torch.manual_seed(cfg.seed)
    device = _device(handle)
    optimizer = AdamW(trainable, lr=cfg.lr, weight_decay=cfg.weight_decay)
    scaler = None
    if cfg.mixed_precision:
        scaler = torch.amp.GradScaler(device.type)
    plateau = PlateauState(lr=cfg.lr, factor=cfg.plateau_factor, patience=cfg.plateau_patience)
    stopper = EarlyStopState(patience=cfg.early_stop_patience)

    history: list[EpochStats] = []
    best_loss, best_epoch, best_state = math.inf, -1, None
    stopped = False
    writer = _HistoryWriter(history_path) if history_path is not None else None
    lr = cfg.lr
    try:
        for epoch in range(cfg.max_epochs):
            if hasattr(train_ds, "set_epoch"):
                train_ds.set_epoch(epoch)
            tr = _run_epoch(handle, _loader(train_ds, cfg.batch_size, True, cfg.seed, epoch, cfg.num_workers),
                            epoch, "train", lr, optimizer, scaler, cfg.mixed_precision)
            va = _run_epoch(handle, _loader(val_ds, cfg.batch_size, False, cfg.seed, epoch, cfg.num_workers),
                            epoch, "val", lr, mixed=cfg.mixed_precision)
            history += [tr, va]
            if writer:
                writer.write(tr, va)
            if on_epoch:
                on_epoch(tr, va)
            log.info("epoch %d train_loss %.5f val_loss %.5f lr %.1e", epoch, tr.loss, va.loss, lr)

            if va.loss < best_loss:
                best_loss, best_epoch = va.loss, epoch
                best_state = {k: v.detach().clone() for k, v in handle.module.state_dict().items()}

            lr, plateau = plateau_scheduler_step(plateau, va.loss)
            for g in optimizer.param_groups:
                g["lr"] = lr
            stop, stopper = early_stop_check(stopper, va.loss)
            if stop:
                stopped = True
                break
    finally:
        if writer:
            writer.close()

    if restore_best and best_state is not None:
        handle.module.load_state_dict(best_state)
    return CheckpointRecord(best_loss, best_epoch, best_state or {}, history, stopped)


class _HistoryWriter:
    def __init__(self, path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.fh = open(self.path, "w", newline="")
        self.w = csv.DictWriter(self.fh, HISTORY_COLUMNS, lineterminator="\n")
        self.w.writeheader()

    def write(self, *rows: EpochStats):
        for r in rows:
            self.w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.row().items()})
        self.fh.flush()

    def close(self):
        self.fh.close()


def read_history(path) -> list[EpochStats]:
    with open(path, newline="") as fh:
        return [EpochStats(int(r["epoch"]), r["split"], float(r["loss"]), float(r["accuracy"]),
                           float(r["auc"]), float(r["f1"]), float(r["lr"])) for r in csv.DictReader(fh)]


# ---------------------------------------------------------------------------
# inference and checkpoint files


@torch.no_grad()
def predict(handle: BackboneHandle, data, stats: NormalizationStats = IMAGENET_STATS,
            batch_size: int = 128) -> np.ndarray:
    """Lens probabilities (softmax of the two logits) in dataset order."""
    ds = as_torch_dataset(data, stats, handle.input_side, None)
    was = handle.module.training
    handle.module.eval()
    out = []
    try:
        for x, _ in DataLoader(ds, batch_size=batch_size, shuffle=False):
            out.append(_lens_scores(handle(x.to(_device(handle), _dtype(handle)))).cpu().numpy())
    finally:
        handle.module.train(was)
    return np.concatenate(out).astype(float) if out else np.zeros(0)


def save_checkpoint(directory, handle: BackboneHandle, record: CheckpointRecord, **manifest) -> Path:
    """Write ``checkpoint.pt`` (best tensors) and ``checkpoint.json`` (manifest)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    torch.save(record.state_dict, directory / "checkpoint.pt")
    meta = dict(handle.manifest(), best_epoch=record.best_epoch, best_val_loss=record.best_val_loss,
                epochs_run=record.epochs_run, stopped_early=record.stopped_early, **manifest)
    (directory / "checkpoint.json").write_text(json.dumps(meta, indent=2, sort_keys=True, default=str) + "\n")
    return directory


def load_checkpoint(directory, handle: BackboneHandle) -> dict:
    """Load tensors into ``handle`` and return the manifest."""
    directory = Path(directory)
    meta = json.loads((directory / "checkpoint.json").read_text())
    if meta.get("architecture") != handle.name:
        raise TrainingError(f"checkpoint is for {meta.get('architecture')!r}, handle is {handle.name!r}")
    state = torch.load(directory / "checkpoint.pt", map_location=_device(handle), weights_only=True)
    handle.module.load_state_dict(state)
    return meta
