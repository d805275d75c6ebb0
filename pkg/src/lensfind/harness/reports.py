"""Complexity table and comparison against published values."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ..backbones.complexity import COUNTING_CONVENTION, count_parameters, estimate_flops
from ..backbones.registry import DISPLAY_NAMES, create_backbone
from ..data_ingest import TEST_SET_IDS
from ..ensemble import ENSEMBLE_NAME
from .reference import CELLS, REFERENCE, ReferenceTable

COMPLEXITY_COLUMNS = ("model", "params", "macs", "flops_2x_macs", "mean_auc")


def mean_auc(metrics_rows: Iterable[dict], model: str, experiment: str) -> float:
    """Mean AUC over test sets a..l for one model in one cell; NaN if none."""
    vals = [float(r["auc"]) for r in metrics_rows
            if r["model"] == model and r["experiment"] == experiment and r["test_set"] in TEST_SET_IDS]
    vals = [v for v in vals if not math.isnan(v)]
    return float(np.mean(vals)) if vals else float("nan")


def complexity_report(models: Sequence[str], input_side: int | None = None, variant: str = "full",
                      metrics_rows: Sequence[dict] = (), experiment: str = "C3") -> list[dict]:
    """Parameters, MACs and 2xMACs per model plus its mean AUC in ``experiment``.

    Models are instantiated on the meta device, so no memory is allocated
    for weights.
    """
    rows = []
    for name in models:
        h = create_backbone(name, variant=variant, image_side=input_side, device="meta")
        macs = estimate_flops(h, input_side)
        rows.append(dict(model=name, params=count_parameters(h), macs=macs, flops_2x_macs=2 * macs,
                         mean_auc=mean_auc(metrics_rows, name, experiment)))
    return rows


def write_complexity(path, rows: Sequence[dict], input_side: int) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(f"# input {input_side}x{input_side}; {COUNTING_CONVENTION}\n")
        w = csv.DictWriter(fh, COMPLEXITY_COLUMNS, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    return path


def read_complexity(path) -> list[dict]:
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rows = list(csv.DictReader(lines))
    for r in rows:
        r["params"], r["macs"], r["flops_2x_macs"] = int(r["params"]), int(r["macs"]), int(r["flops_2x_macs"])
        r["mean_auc"] = float(r["mean_auc"])
    return rows


@dataclass(frozen=True)
class ComparisonRow:
    test_set: str
    cell: str
    metric: str
    ours: float | None
    reference: float
    delta: float | None
    flagged: bool

    @property
    def missing(self) -> bool:
        return self.ours is None


def compare_to_reference(metrics_rows: Iterable[dict], reference: ReferenceTable = REFERENCE,
                         model: str = ENSEMBLE_NAME, metrics: Sequence[str] = ("auc", "f1"),
                         cells: Sequence[str] = CELLS, test_sets: Sequence[str] = TEST_SET_IDS,
                         flag_threshold: float = 0.05) -> list[ComparisonRow]:
    """Side-by-side table of our ``model`` rows against published ensemble values.

    Cells without a metrics row are reported with ``ours=None``; the
    ``flagged`` column marks |delta| > ``flag_threshold``.  Informational only.
    """
    ours = {(r["test_set"], r["experiment"]): r for r in metrics_rows if r["model"] == model}
    out = []
    for metric in metrics:
        for cell in cells:
            for t in test_sets:
                ref = reference.value(metric, t, cell)
                if ref is None:
                    continue
                row = ours.get((t, cell))
                val = None if row is None else float(row[metric])
                delta = None if val is None or math.isnan(val) else val - ref
                out.append(ComparisonRow(t, cell, metric, val, ref, delta,
                                         delta is not None and abs(delta) > flag_threshold))
    return out


def render_comparison(rows: Sequence[ComparisonRow]) -> str:
    lines = [f"{'metric':<6} {'cell':<4} {'test':<4} {'ours':>8} {'ref':>6} {'delta':>8} flag"]
    for r in rows:
        ours = "missing" if r.ours is None else f"{r.ours:.4f}"
        delta = "" if r.delta is None else f"{r.delta:+.4f}"
        lines.append(f"{r.metric:<6} {r.cell:<4} {r.test_set:<4} {ours:>8} {r.reference:>6.2f} {delta:>8} "
                     f"{'*' if r.flagged else ''}")
    n_missing = sum(r.missing for r in rows)
    lines.append(f"{len(rows)} cells, {n_missing} missing, {sum(r.flagged for r in rows)} flagged")
    return "\n".join(lines)


def display_name(model: str) -> str:
    return DISPLAY_NAMES.get(model, model)
