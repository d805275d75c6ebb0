import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from lensfind.ensemble import (
    ENSEMBLE_NAME, AlignmentError, EnsembleError, EnsembleInput, ensemble_predict, ensemble_rows,
)

unit = st.floats(0, 1)


def test_identical_members():
    v = np.array([0.1, 0.7, 0.3])
    np.testing.assert_array_equal(ensemble_predict({"a": v, "b": v.copy(), "c": v.copy()}), v)


def test_two_member_mean():
    assert ensemble_predict({"a": [0.2], "b": [0.8]})[0] == pytest.approx(0.5, abs=1e-15)


def test_missing_member_not_counted():
    members = {f"m{i}": [0.9] for i in range(9)}
    members["m9"] = None
    inp = EnsembleInput(("x",), {k: None if v is None else np.array(v) for k, v in members.items()})
    assert inp.n == 9
    # 9 * 0.9 / 9, not / 10
    assert ensemble_predict(inp)[0] == pytest.approx(0.9, abs=1e-15)


def test_no_members_is_an_error():
    with pytest.raises(EnsembleError):
        ensemble_predict({"a": None})


def test_out_of_range_scores_rejected():
    with pytest.raises(EnsembleError):
        ensemble_predict({"a": [1.2], "b": [0.5]})


def test_misalignment_lists_symmetric_difference():
    with pytest.raises(AlignmentError) as info:
        EnsembleInput.from_mapping({"a": {"s1": 0.1, "s2": 0.2}, "b": {"s2": 0.3, "s3": 0.4}})
    assert info.value.difference == {"s1", "s3"}
    assert "s1" in str(info.value) and "s3" in str(info.value)


def test_length_mismatch_rejected():
    with pytest.raises(AlignmentError):
        ensemble_predict({"a": [0.1, 0.2], "b": [0.3]})


def test_from_mapping_aligns_by_sample_id():
    inp = EnsembleInput.from_mapping({"a": {"s2": 0.2, "s1": 0.4}, "b": {"s1": 0.6, "s2": 0.0}})
    assert inp.sample_ids == ("s1", "s2")
    np.testing.assert_allclose(ensemble_predict(inp), [0.5, 0.1])


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 8).flatmap(lambda k: st.lists(arrays(float, 6, elements=unit), min_size=k, max_size=k)),
       st.randoms())
def test_bounds_permutation_idempotence(vectors, rnd):
    members = {f"m{i}": v for i, v in enumerate(vectors)}
    out = ensemble_predict(members)
    stacked = np.stack(vectors)
    assert np.all(stacked.min(0) <= out) and np.all(out <= stacked.max(0))
    assert np.all((0 <= out) & (out <= 1))
    keys = list(members)
    rnd.shuffle(keys)
    np.testing.assert_allclose(ensemble_predict({k: members[k] for k in keys}), out, rtol=0, atol=1e-15)
    np.testing.assert_array_equal(ensemble_predict({"e1": out, "e2": out}), out)


def _rows(model, scores, experiment="A1", test_set="a"):
    return [dict(sample_id=f"s{i}", test_set=test_set, model=model, experiment=experiment, score=s, label=i % 2)
            for i, s in enumerate(scores)]


def test_ensemble_rows_schema_and_exclusion():
    rows = _rows("vit", [0.2, 0.8]) + _rows("deit", [0.4, 0.6]) + _rows("resnet18", [1.0, 1.0])
    rows += _rows("vit", [0.0, 0.0], experiment="B1")
    out = ensemble_rows(rows, "A1")
    assert [r["model"] for r in out] == [ENSEMBLE_NAME] * 2
    assert [r["score"] for r in out] == pytest.approx([0.3, 0.7])
    assert [r["label"] for r in out] == [0, 1]
    with_resnet = ensemble_rows(rows, "A1", exclude=())
    assert [r["score"] for r in with_resnet] == pytest.approx([(0.2 + 0.4 + 1) / 3, (0.8 + 0.6 + 1) / 3])


def test_ensemble_rows_per_test_set():
    rows = _rows("vit", [0.2, 0.8], test_set="a") + _rows("vit", [0.5], test_set="b")
    rows += _rows("deit", [0.4, 0.6], test_set="a") + _rows("deit", [0.7], test_set="b")
    out = ensemble_rows(rows, "A1")
    assert {r["test_set"] for r in out} == {"a", "b"}
    assert [r["score"] for r in out if r["test_set"] == "b"] == pytest.approx([0.6])
