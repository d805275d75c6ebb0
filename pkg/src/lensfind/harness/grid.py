"""Experiment grid: train, checkpoint, predict, score, ensemble.

Output tree under ``cfg.output_dir``::

    run_manifest.json
    config.yaml
    metrics.csv                  one row per (test set, model, experiment)
    failures.csv                 cells that raised, if any
    runs/<exp><depth>/<model>/
        checkpoint.pt  checkpoint.json  history.csv  predictions.csv
        roc/<test set>.csv
    runs/<exp><depth>/Ensemble/predictions.csv, roc/<test set>.csv

Cells run sequentially in (experiment, depth, model) order.  Each cell's
RNG seed is derived from the grid seed and the cell key, so a rerun with
the same manifest and config reproduces ``metrics.csv`` byte for byte
(mixed precision off).
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import platform
import traceback
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import torch

from .. import __version__
from ..backbones.registry import MODEL_NAMES, LocalWeightProvider, create_backbone
from ..data_ingest import (EXPERIMENTS, MANIFEST_NAME, DataCatalog, DatasetSpec, LabeledDataset,
                           build_test_set, build_training_set, resolve_data_root)
from ..ensemble import ENSEMBLE_NAME, ensemble_rows
from ..metrics import evaluate, write_csv, write_metrics, write_predictions, write_roc
from ..trainer.loop import predict, save_checkpoint, train
from .config import ExperimentConfig, save_config

log = logging.getLogger(__name__)

FAILURE_COLUMNS = ("experiment", "model", "error", "message")


def cell_label(experiment: str, depth: int) -> str:
    return f"{experiment}{depth}"


def cell_dir(root, experiment: str, depth: int, model: str) -> Path:
    return Path(root) / "runs" / cell_label(experiment, depth) / model


def cell_seed(seed: int, experiment: str, depth: int, model: str) -> int:
    key = [seed, EXPERIMENTS.index(experiment), depth,
           MODEL_NAMES.index(model) if model in MODEL_NAMES else len(MODEL_NAMES)]
    return int(np.random.SeedSequence(key).generate_state(1)[0])


@dataclass
class GridResult:
    root: Path
    metrics_rows: list[dict]
    failures: list[dict]

    @property
    def metrics_path(self) -> Path:
        return self.root / "metrics.csv"


class _Data:
    """Datasets built once per grid."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.catalog = DataCatalog.from_root(cfg.data_root)
        self._train: dict[str, tuple[LabeledDataset, LabeledDataset]] = {}
        self._test: dict[str, LabeledDataset] = {}

    def training(self, experiment: str):
        if experiment not in self._train:
            spec = DatasetSpec(experiment, self.cfg.seed, self.cfg.val_fraction_for_B)
            self._train[experiment] = build_training_set(spec, self.catalog, self.cfg.counts)
        return self._train[experiment]

    def test(self, test_id: str) -> LabeledDataset:
        if test_id not in self._test:
            self._test[test_id] = build_test_set(test_id, self.catalog, self.cfg.counts)
        return self._test[test_id]


def build_handle(cfg: ExperimentConfig, model: str):
    weights = LocalWeightProvider(cfg.weights_dir) if cfg.weights_dir else None
    pretrained = cfg.pretrained and cfg.variant == "full"
    return create_backbone(model, pretrained=pretrained, variant=cfg.variant, image_side=cfg.image_side,
                           drop_path_rate=cfg.train.stochastic_depth_rate, weights=weights)


def train_cell(cfg: ExperimentConfig, experiment: str, depth: int, model: str, data: _Data | None = None,
               root: Path | None = None):
    """Train one cell, write its checkpoint and history; returns the handle."""
    data = data or _Data(cfg)
    root = Path(root or cfg.output_dir)
    out = cell_dir(root, experiment, depth, model)
    seed = cell_seed(cfg.seed, experiment, depth, model)
    torch.manual_seed(seed)
    handle = build_handle(cfg, model)
    train_set, val_set = data.training(experiment)
    aug = None if cfg.augment is None else replace(cfg.augment, seed=seed)
    record = train(handle, depth, train_set, val_set, replace(cfg.train, seed=seed), augment=aug,
                   history_path=out / "history.csv")
    save_checkpoint(out, handle, record, experiment=experiment, dataset=train_set.name, seed=seed,
                    train_config=cfg.train.to_dict(),
                    augment_config=None if aug is None else aug.to_dict())
    return handle


def evaluate_cell(cfg: ExperimentConfig, handle, experiment: str, depth: int, model: str,
                  data: _Data | None = None, root: Path | None = None) -> list[dict]:
    """Predict every configured test set; writes predictions and ROC exports."""
    data = data or _Data(cfg)
    root = Path(root or cfg.output_dir)
    out = cell_dir(root, experiment, depth, model)
    label = cell_label(experiment, depth)
    pred_rows, metric_rows = [], []
    for t in cfg.test_sets:
        ds = data.test(t)
        scores = predict(handle, ds, batch_size=cfg.train.batch_size)
        labels = ds.labels
        pred_rows += [dict(sample_id=sid, test_set=t, model=model, experiment=label, score=float(s), label=int(y))
                      for sid, s, y in zip(ds.sample_ids, scores, labels)]
        report = evaluate((scores, labels), cfg.threshold)
        write_roc(out / "roc" / f"{t}.csv", report.roc_points)
        metric_rows.append(report.row(t, model, label))
    write_predictions(out / "predictions.csv", pred_rows)
    return metric_rows


def ensemble_cell(cfg: ExperimentConfig, experiment: str, depth: int, prediction_rows: list[dict],
                  root: Path | None = None) -> list[dict]:
    root = Path(root or cfg.output_dir)
    label = cell_label(experiment, depth)
    rows = ensemble_rows(prediction_rows, label, exclude=cfg.ensemble_exclude)
    if not rows:
        return []
    out = cell_dir(root, experiment, depth, ENSEMBLE_NAME)
    write_predictions(out / "predictions.csv", rows)
    metric_rows = []
    for t in cfg.test_sets:
        sub = [r for r in rows if r["test_set"] == t]
        if not sub:
            continue
        report = evaluate((np.array([r["score"] for r in sub]), np.array([r["label"] for r in sub])), cfg.threshold)
        write_roc(out / "roc" / f"{t}.csv", report.roc_points)
        metric_rows.append(report.row(t, ENSEMBLE_NAME, label))
    return metric_rows


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_run_manifest(cfg: ExperimentConfig, root: Path) -> Path:
    data_root = resolve_data_root(cfg.data_root)
    manifest = data_root / MANIFEST_NAME
    meta = dict(
        package_version=__version__,
        torch_version=torch.__version__,
        numpy_version=np.__version__,
        python_version=platform.python_version(),
        data_manifest=str(manifest),
        data_manifest_sha256=_sha256(manifest) if manifest.is_file() else None,
        cells=[dict(experiment=e, depth=d, model=m, seed=cell_seed(cfg.seed, e, d, m)) for e, d, m in cfg.cells],
        config=cfg.to_dict(),
    )
    path = root / "run_manifest.json"
    path.write_text(json.dumps(meta, indent=2, sort_keys=True, default=str) + "\n")
    return path


def run_grid(cfg: ExperimentConfig) -> GridResult:
    """Run every cell, then the per-(experiment, depth) ensembles.

    A failing cell is logged to ``failures.csv`` and skipped; the rest of
    the grid continues.
    """
    root = Path(cfg.output_dir)
    root.mkdir(parents=True, exist_ok=True)
    if cfg.deterministic:
        torch.use_deterministic_algorithms(True)
    save_config(cfg, root / "config.yaml")
    write_run_manifest(cfg, root)
    metrics_path = root / "metrics.csv"
    write_metrics(metrics_path, [])  # header only; rows are appended per cell
    failures_path = root / "failures.csv"
    if failures_path.exists():
        failures_path.unlink()

    data = _Data(cfg)
    all_metrics, failures = [], []
    for e in cfg.experiments:
        for d in cfg.depths:
            preds: list[dict] = []
            for m in cfg.models:
                try:
                    handle = train_cell(cfg, e, d, m, data, root)
                    rows = evaluate_cell(cfg, handle, e, d, m, data, root)
                except Exception as exc:  # cell isolation
                    log.error("cell %s/%s failed: %s", cell_label(e, d), m, exc)
                    log.debug("%s", traceback.format_exc())
                    fail = dict(experiment=cell_label(e, d), model=m, error=type(exc).__name__, message=str(exc))
                    failures.append(fail)
                    write_csv(failures_path, [fail], FAILURE_COLUMNS, append=True)
                    continue
                write_metrics(metrics_path, rows, append=True)
                all_metrics += rows
                preds += _read_cell_predictions(root, e, d, m)
            if preds:
                rows = ensemble_cell(cfg, e, d, preds, root)
                write_metrics(metrics_path, rows, append=True)
                all_metrics += rows
    return GridResult(root, all_metrics, failures)


def _read_cell_predictions(root: Path, experiment: str, depth: int, model: str) -> list[dict]:
    with open(cell_dir(root, experiment, depth, model) / "predictions.csv", newline="") as fh:
        return list(csv.DictReader(fh))


def collect_predictions(root) -> list[dict]:
    """All per-cell prediction rows under ``root/runs``."""
    rows = []
    for path in sorted(Path(root).glob("runs/*/*/predictions.csv")):
        with open(path, newline="") as fh:
            rows += list(csv.DictReader(fh))
    return rows
