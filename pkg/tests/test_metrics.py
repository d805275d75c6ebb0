import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lensfind.metrics import (
    METRICS_COLUMNS, PREDICTION_COLUMNS, ConfusionMatrix, MetricsError, PredictionRecord, UndefinedAUCError,
    auc_score, confusion_at, evaluate, f1_score, precision, read_metrics, read_predictions, read_roc, recall,
    roc_and_auc, roc_curve, write_metrics, write_predictions, write_roc,
)


def _pairwise_auc(scores, labels):
    """Brute-force oracle: P(s+ > s-) + 0.5 P(s+ = s-)."""
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    total = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p in pos for n in neg)
    return total / (len(pos) * len(neg))


def _recs(scores, labels):
    return [PredictionRecord(f"s{i}", float(s), int(y)) for i, (s, y) in enumerate(zip(scores, labels))]


# --- records ----------------------------------------------------------------


@pytest.mark.parametrize("score", [-0.1, 1.1, float("nan"), float("inf")])
def test_record_rejects_bad_score(score):
    with pytest.raises(MetricsError):
        PredictionRecord("x", score, 1)


def test_record_rejects_bad_label():
    with pytest.raises(MetricsError):
        PredictionRecord("x", 0.5, 2)


# --- confusion and F1 -------------------------------------------------------


def test_all_positive_perfect():
    cm = confusion_at(_recs([1.0] * 7, [1] * 7), 0.5)
    assert (cm.tp, cm.fp, cm.fn, cm.tn) == (7, 0, 0, 0)


def test_precision_recall_example():
    cm = ConfusionMatrix(tp=3, fp=1, fn=2, tn=0)
    assert precision(cm) == 0.75 and recall(cm) == 0.6
    assert round(f1_score(cm), 4) == 0.6667
    # harmonic mean computed by hand: 2 / (1/0.75 + 1/0.6)
    assert math.isclose(f1_score(cm), 2 / (1 / 0.75 + 1 / 0.6))


def test_threshold_one_is_strict():
    cm = confusion_at((np.array([1.0, 0.99, 1.0]), np.array([1, 0, 1])), 1.0)
    assert cm.tp + cm.fp == 0


def test_score_equal_to_threshold_is_negative():
    cm = confusion_at((np.array([0.5, 0.5]), np.array([1, 0])))
    assert (cm.tp, cm.fp, cm.fn, cm.tn) == (0, 0, 1, 1)


def test_perfect_f1():
    assert f1_score(confusion_at((np.array([0.9, 0.1]), np.array([1, 0])))) == 1.0


def test_degenerate_f1_is_zero():
    cm = confusion_at((np.array([0.1, 0.2]), np.array([0, 0])))
    assert (precision(cm), recall(cm), f1_score(cm)) == (0.0, 0.0, 0.0)


def test_empty_input_rejected():
    with pytest.raises(MetricsError):
        confusion_at([])


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 1), st.integers(0, 1)), min_size=1, max_size=40), st.floats(0, 1))
def test_confusion_invariants(pairs, thr):
    s, y = map(np.array, zip(*pairs))
    cm = confusion_at((s, y), thr)
    assert cm.n == len(pairs)
    f = f1_score(cm)
    assert 0.0 <= f <= 1.0
    assert (f == 1.0) == (cm.fp == 0 and cm.fn == 0 and cm.tp > 0)


# --- ROC and AUC ------------------------------------------------------------


def test_worked_auc_example():
    assert auc_score(_recs([0.9, 0.8, 0.4, 0.3], [1, 0, 1, 0])) == 0.75
    assert _pairwise_auc([0.9, 0.8, 0.4, 0.3], [1, 0, 1, 0]) == 0.75


def test_separated_and_antisorted():
    assert auc_score((np.array([0.9, 0.8, 0.2, 0.1]), np.array([1, 1, 0, 0]))) == 1.0
    assert auc_score((np.array([0.9, 0.8, 0.2, 0.1]), np.array([0, 0, 1, 1]))) == 0.0


def test_all_tied_is_half():
    assert auc_score((np.full(6, 0.3), np.array([1, 0, 1, 0, 0, 1]))) == 0.5


def test_single_class_is_an_error():
    with pytest.raises(UndefinedAUCError):
        roc_and_auc((np.array([0.2, 0.9]), np.array([1, 1])))
    assert math.isnan(evaluate((np.array([0.2, 0.9]), np.array([1, 1]))).auc)


@settings(max_examples=1000, deadline=None)
@given(st.lists(st.tuples(st.sampled_from([0.0, 0.1, 0.25, 0.5, 0.5, 0.75, 1.0]) | st.floats(0, 1),
                          st.integers(0, 1)), min_size=2, max_size=50))
def test_auc_equals_pairwise_oracle(pairs):
    s, y = map(np.array, zip(*pairs))
    if y.min() == y.max():
        with pytest.raises(UndefinedAUCError):
            auc_score((s, y))
        return
    assert abs(auc_score((s, y)) - _pairwise_auc(s, y)) <= 1e-12


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.floats(0.01, 0.99), st.integers(0, 1)), min_size=2, max_size=50))
def test_roc_shape_and_transforms(pairs):
    s, y = map(np.array, zip(*pairs))
    if y.min() == y.max():
        return
    points, auc = roc_and_auc((s, y))
    assert points[0] == (0.0, 0.0) and points[-1] == (1.0, 1.0)
    fpr, tpr = np.array(points).T
    assert np.all(np.diff(fpr) >= 0) and np.all(np.diff(tpr) >= 0)
    # strictly increasing maps into [0, 1]
    assert auc_score((s ** 3, y)) == auc
    assert auc_score((np.sqrt(s), y)) == auc
    assert auc_score(((s + 1) / 2, y)) == auc
    # label flip symmetry
    assert auc_score((1 - s, 1 - y)) == auc


def test_roc_thresholds_include_sentinels():
    fpr, tpr, thr = roc_curve((np.array([0.2, 0.7, 0.7]), np.array([0, 1, 0])))
    assert thr[0] == np.inf and thr[-1] == -np.inf
    assert list(zip(fpr, tpr)) == [(0.0, 0.0), (0.5, 1.0), (1.0, 1.0), (1.0, 1.0)]


def test_evaluate_report():
    rep = evaluate(_recs([0.9, 0.8, 0.4, 0.3], [1, 0, 1, 0]))
    assert rep.auc == 0.75
    assert (rep.precision, rep.recall, rep.accuracy, rep.f1) == (0.5, 0.5, 0.5, 0.5)
    row = rep.row("a", "vit", "A1")
    assert tuple(row) == METRICS_COLUMNS


# --- CSV --------------------------------------------------------------------


def test_csv_round_trips(tmp_path):
    preds = [dict(sample_id="f.fits#0", test_set="a", model="vit", experiment="A1", score=0.25, label=1)]
    write_predictions(tmp_path / "p.csv", preds)
    assert (tmp_path / "p.csv").read_text().splitlines()[0] == ",".join(PREDICTION_COLUMNS)
    assert read_predictions(tmp_path / "p.csv") == preds

    rep = evaluate((np.array([0.9, 0.1, 0.6]), np.array([1, 0, 0])))
    row = rep.row("b", "deit", "C3")
    write_metrics(tmp_path / "m.csv", [row])
    write_metrics(tmp_path / "m.csv", [row], append=True)
    back = read_metrics(tmp_path / "m.csv")
    assert len(back) == 2 and back[0] == row
    assert (tmp_path / "m.csv").read_text().splitlines()[0] == ",".join(METRICS_COLUMNS)

    write_roc(tmp_path / "r.csv", rep.roc_points)
    assert read_roc(tmp_path / "r.csv") == rep.roc_points


def test_write_rejects_incomplete_rows(tmp_path):
    with pytest.raises(MetricsError):
        write_metrics(tmp_path / "m.csv", [dict(test_set="a")])
