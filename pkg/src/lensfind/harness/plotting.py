"""ROC and complexity figures (matplotlib, Agg backend)."""
from __future__ import annotations

import math
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from ..ensemble import ENSEMBLE_NAME  # noqa: E402
from ..metrics import read_roc  # noqa: E402
from .reports import display_name  # noqa: E402


class MissingExportError(FileNotFoundError):
    pass


def _trapezoid(points):
    f = np.array([p[0] for p in points])
    t = np.array([p[1] for p in points])
    return float(np.sum(np.diff(f) * (t[1:] + t[:-1]) / 2))


def _save(fig, out: Path) -> Path:
    out.parent.mkdir(parents=True, exist_ok=True)
    # no creation date / software stamp, so reruns give identical bytes
    meta = {"Software": None} if out.suffix.lower() == ".png" else {"CreationDate": None, "Creator": None, "Producer": None}
    if out.suffix.lower() == ".svg":
        meta = {"Date": None, "Creator": None}
    fig.savefig(out, dpi=120, metadata=meta)
    plt.close(fig)
    return out


def plot_roc(results_dir, test_set: str, experiment: str, out=None) -> Path:
    """One ROC curve per model (plus the ensemble) of cell ``experiment``.

    Reads ``runs/<experiment>/<model>/roc/<test_set>.csv`` exports.
    """
    cell_root = Path(results_dir) / "runs" / experiment
    exports = sorted(cell_root.glob(f"*/roc/{test_set}.csv"))
    if not exports:
        raise MissingExportError(f"no ROC exports for test set {test_set!r} under {cell_root}")
    # ensemble last so it draws on top
    exports.sort(key=lambda p: (p.parent.parent.name == ENSEMBLE_NAME, p.parent.parent.name))
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.plot([0, 1], [0, 1], ls=":", c="0.6", lw=1)
    for path in exports:
        model = path.parent.parent.name
        pts = read_roc(path)
        kw = dict(c="k", lw=2) if model == ENSEMBLE_NAME else dict(lw=1)
        ax.plot([p[0] for p in pts], [p[1] for p in pts], label=f"{display_name(model)} ({_trapezoid(pts):.3f})", **kw)
    ax.set(xlabel="False positive rate", ylabel="True positive rate", xlim=(0, 1), ylim=(0, 1.01),
           title=f"ROC, experiment {experiment}, test set {test_set}")
    ax.legend(loc="lower right", fontsize=7)
    out = Path(out) if out else Path(results_dir) / "plots" / f"roc_{experiment}_{test_set}.png"
    return _save(fig, out)


def plot_complexity(rows: Sequence[dict], out) -> Path:
    """Parameters vs 2xMACs, marker area scaled by mean AUC where known."""
    fig, ax = plt.subplots(figsize=(6, 4.5))
    for r in rows:
        auc = r.get("mean_auc", float("nan"))
        size = 40 if auc is None or math.isnan(auc) else 300 * auc
        ax.scatter(r["params"] / 1e6, r["flops_2x_macs"] / 1e9, s=size, alpha=0.6)
        ax.annotate(display_name(r["model"]), (r["params"] / 1e6, r["flops_2x_macs"] / 1e9), fontsize=7)
    ax.set(xlabel="Parameters (millions)", ylabel="2 x MACs (billions)")
    return _save(fig, Path(out))
