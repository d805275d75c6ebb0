"""Confusion statistics, F1, ROC curves and AUC.

Conventions
-----------
* A sample is predicted positive iff ``score > threshold`` (strict), default
  threshold 0.5.
* Precision, recall and F1 are 0 when their denominator is 0.
* The ROC sweep runs over every distinct score plus the sentinels ``+inf``
  and ``-inf``, so the curve always starts at (0, 0) and ends at (1, 1).
* AUC is the trapezoidal area of that curve.  Between two consecutive
  distinct thresholds the trapezoid credits tied positive/negative pairs
  with one half, so the area equals P(s+ > s-) + 0.5 P(s+ = s-).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

DEFAULT_THRESHOLD = 0.5

PREDICTION_COLUMNS = ("sample_id", "test_set", "model", "experiment", "score", "label")
METRICS_COLUMNS = ("test_set", "model", "experiment", "auc", "f1", "precision", "recall",
                   "accuracy", "threshold")


class MetricsError(ValueError):
    pass


class UndefinedAUCError(MetricsError):
    """ROC/AUC requested on records containing a single class."""


@dataclass(frozen=True)
class PredictionRecord:
    sample_id: str
    score: float
    label: int
    pool: str = ""

    def __post_init__(self):
        if not (math.isfinite(self.score) and 0.0 <= self.score <= 1.0):
            raise MetricsError(f"score for {self.sample_id!r} must be finite and in [0, 1], got {self.score}")
        if self.label not in (0, 1):
            raise MetricsError(f"label for {self.sample_id!r} must be 0 or 1, got {self.label}")


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    fn: int
    tn: int
    threshold: float = DEFAULT_THRESHOLD

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    @property
    def precision(self) -> float:
        return _ratio(self.tp, self.tp + self.fp)

    @property
    def recall(self) -> float:
        return _ratio(self.tp, self.tp + self.fn)

    @property
    def accuracy(self) -> float:
        return _ratio(self.tp + self.tn, self.n)

    @property
    def tpr(self) -> float:
        return self.recall

    @property
    def fpr(self) -> float:
        return _ratio(self.fp, self.fp + self.tn)


@dataclass
class MetricsReport:
    auc: float
    f1: float
    precision: float
    recall: float
    accuracy: float
    threshold: float
    roc_points: list[tuple[float, float]] = field(default_factory=list)
    confusion: ConfusionMatrix | None = None

    def row(self, test_set: str, model: str, experiment: str) -> dict:
        return dict(test_set=test_set, model=model, experiment=experiment, auc=self.auc, f1=self.f1,
                    precision=self.precision, recall=self.recall, accuracy=self.accuracy,
                    threshold=self.threshold)


def _ratio(a: int, b: int) -> float:
    return a / b if b else 0.0


def _arrays(records) -> tuple[np.ndarray, np.ndarray]:
    """Scores and labels from PredictionRecords or a ``(scores, labels)`` pair."""
    if isinstance(records, tuple) and len(records) == 2:
        scores, labels = (np.asarray(a) for a in records)
    else:
        records = list(records)
        scores = np.array([r.score for r in records], dtype=float)
        labels = np.array([r.label for r in records], dtype=int)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise MetricsError("scores and labels must be 1-D and of equal length")
    if scores.size == 0:
        raise MetricsError("no records")
    if not np.isin(labels, (0, 1)).all():
        raise MetricsError("labels must be 0 or 1")
    return scores.astype(float), labels.astype(int)


def confusion_at(records, threshold: float = DEFAULT_THRESHOLD) -> ConfusionMatrix:
    """Confusion matrix with positives defined by ``score > threshold``.

    ``records`` is an iterable of :class:`PredictionRecord` or a
    ``(scores, labels)`` tuple of arrays.
    """
    scores, labels = _arrays(records)
    pred = scores > threshold
    pos = labels == 1
    tp = int(np.sum(pred & pos))
    fp = int(np.sum(pred & ~pos))
    fn = int(np.sum(~pred & pos))
    tn = int(np.sum(~pred & ~pos))
    return ConfusionMatrix(tp, fp, fn, tn, threshold)


def precision(cm: ConfusionMatrix) -> float:
    return cm.precision


def recall(cm: ConfusionMatrix) -> float:
    return cm.recall


def f1_score(cm: ConfusionMatrix) -> float:
    """Harmonic mean of precision and recall, 0 if both are 0."""
    p, r = cm.precision, cm.recall
    return 2 * p * r / (p + r) if p + r > 0 else 0.0


def roc_curve(records) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(fpr, tpr, thresholds)`` over all distinct scores plus +-inf.

    Thresholds are decreasing; the point at threshold t counts ``score >= t``
    as positive, which enumerates exactly the operating points reachable by
    the strict rule at thresholds between consecutive scores.
    """
    scores, labels = _arrays(records)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedAUCError("ROC/AUC undefined: records contain a single class")
    order = np.argsort(-scores, kind="mergesort")
    s, y = scores[order], labels[order]
    # last index of each run of equal scores
    ends = np.r_[np.flatnonzero(np.diff(s) != 0), s.size - 1]
    tp = np.cumsum(y)[ends]
    fp = (ends + 1) - tp
    tp = np.r_[0, tp, n_pos]
    fp = np.r_[0, fp, n_neg]
    thresholds = np.r_[np.inf, s[ends], -np.inf]
    return fp / n_neg, tp / n_pos, thresholds


def _auc_exact(scores: np.ndarray, labels: np.ndarray) -> float:
    """Trapezoid over the ROC in integer arithmetic, scaled once at the end."""
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    order = np.argsort(-scores, kind="mergesort")
    s, y = scores[order], labels[order]
    ends = np.r_[np.flatnonzero(np.diff(s) != 0), s.size - 1]
    tp = np.r_[0, np.cumsum(y)[ends]].astype(np.int64)
    fp = np.r_[0, (ends + 1) - np.cumsum(y)[ends]].astype(np.int64)
    # twice the area in units of (1/n_neg)(1/n_pos)
    twice = int(np.sum((fp[1:] - fp[:-1]) * (tp[1:] + tp[:-1])))
    return float(Fraction(twice, 2 * n_pos * n_neg))


def roc_and_auc(records) -> tuple[list[tuple[float, float]], float]:
    """ROC points and the area under them."""
    fpr, tpr, _ = roc_curve(records)
    scores, labels = _arrays(records)
    return list(zip(fpr.tolist(), tpr.tolist())), _auc_exact(scores, labels)


def auc_score(records) -> float:
    return roc_and_auc(records)[1]


def evaluate(records, threshold: float = DEFAULT_THRESHOLD) -> MetricsReport:
    """Full report at ``threshold``; AUC is NaN if only one class is present."""
    cm = confusion_at(records, threshold)
    try:
        points, auc = roc_and_auc(records)
    except UndefinedAUCError:
        points, auc = [], float("nan")
    return MetricsReport(auc=auc, f1=f1_score(cm), precision=cm.precision, recall=cm.recall,
                         accuracy=cm.accuracy, threshold=threshold, roc_points=points, confusion=cm)


# ---------------------------------------------------------------------------
# CSV


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else str(v)
    return str(v)


def write_csv(path, rows: Iterable[dict], columns: Sequence[str], append: bool = False) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    new = not (append and path.exists() and path.stat().st_size > 0)
    with open(path, "a" if append else "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if new:
            w.writerow(columns)
        for row in rows:
            missing = set(columns) - set(row)
            if missing:
                raise MetricsError(f"row lacks columns {sorted(missing)}")
            w.writerow([_fmt(row[c]) for c in columns])
    return path


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_predictions(path, rows: Iterable[dict], append: bool = False) -> Path:
    return write_csv(path, rows, PREDICTION_COLUMNS, append)


def read_predictions(path) -> list[dict]:
    rows = read_csv(path)
    for r in rows:
        r["score"] = float(r["score"])
        r["label"] = int(r["label"])
    return rows


def write_metrics(path, rows: Iterable[dict], append: bool = False) -> Path:
    return write_csv(path, rows, METRICS_COLUMNS, append)


def read_metrics(path) -> list[dict]:
    rows = read_csv(path)
    for r in rows:
        for k in ("auc", "f1", "precision", "recall", "accuracy", "threshold"):
            r[k] = float(r[k])
    return rows


def write_roc(path, points: Sequence[tuple[float, float]]) -> Path:
    return write_csv(path, ({"fpr": f, "tpr": t} for f, t in points), ("fpr", "tpr"))


def read_roc(path) -> list[tuple[float, float]]:
    return [(float(r["fpr"]), float(r["tpr"])) for r in read_csv(path)]
