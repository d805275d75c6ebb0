"""Uniform soft voting over member probability outputs."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

ENSEMBLE_NAME = "Ensemble"
DEFAULT_EXCLUDED = ("resnet18",)


class EnsembleError(ValueError):
    pass


class AlignmentError(EnsembleError):
    """Members disagree on which samples they scored."""

    def __init__(self, difference: set):
        self.difference = difference
        shown = sorted(map(str, difference))
        more = f" (+{len(shown) - 20} more)" if len(shown) > 20 else ""
        super().__init__(f"member sample sets differ; symmetric difference: {shown[:20]}{more}")


@dataclass(frozen=True)
class EnsembleInput:
    """Per-member scores aligned on ``sample_ids``.

    ``member_scores`` may map a model to ``None`` for a registered member
    without output; such members are not counted in ``N``.
    """

    sample_ids: tuple
    member_scores: Mapping[str, np.ndarray | None]

    @property
    def present(self) -> list[str]:
        return [m for m, s in self.member_scores.items() if s is not None]

    @property
    def n(self) -> int:
        return len(self.present)

    @classmethod
    def from_mapping(cls, members: Mapping[str, Mapping[str, float] | None]) -> "EnsembleInput":
        """Align ``{model: {sample_id: score}}``; raises :class:`AlignmentError`."""
        present = {m: s for m, s in members.items() if s is not None}
        if not present:
            raise EnsembleError("no members present")
        keysets = [set(s) for s in present.values()]
        union, inter = set().union(*keysets), set.intersection(*keysets)
        if union != inter:
            raise AlignmentError(union - inter)
        ids = tuple(sorted(union, key=str))
        scores = {m: (None if s is None else np.array([s[i] for i in ids], dtype=float))
                  for m, s in members.items()}
        return cls(ids, scores)


def ensemble_predict(inp: EnsembleInput | Mapping[str, Sequence[float] | None]) -> np.ndarray:
    """Per-sample mean over present members.

    Accepts an :class:`EnsembleInput` or a plain ``{model: scores}`` mapping
    of equal-length vectors already in the same sample order.
    """
    members = inp.member_scores if isinstance(inp, EnsembleInput) else inp
    vecs = [np.asarray(v, dtype=float) for v in members.values() if v is not None]
    if not vecs:
        raise EnsembleError("ensemble needs at least one present member (N >= 1)")
    lengths = {v.shape for v in vecs}
    if len(lengths) != 1 or vecs[0].ndim != 1:
        raise AlignmentError({f"shape {s}" for s in lengths})
    stacked = np.stack(vecs)
    if np.any(~np.isfinite(stacked)) or np.any((stacked < 0) | (stacked > 1)):
        raise EnsembleError("member scores must lie in [0, 1]")
    # clip guards the last ulp of rounding in the mean
    return np.clip(stacked.mean(axis=0), stacked.min(axis=0), stacked.max(axis=0))


def ensemble_rows(prediction_rows: Sequence[dict], experiment: str,
                  exclude: Sequence[str] = DEFAULT_EXCLUDED) -> list[dict]:
    """Ensemble rows (``model = "Ensemble"``) for every test set of one experiment.

    ``prediction_rows`` follow the predictions CSV schema.  Existing
    ensemble rows and models in ``exclude`` are ignored.
    """
    by_test: dict[str, dict[str, dict[str, float]]] = {}
    labels: dict[tuple[str, str], int] = {}
    for r in prediction_rows:
        if r["experiment"] != experiment or r["model"] == ENSEMBLE_NAME or r["model"] in exclude:
            continue
        by_test.setdefault(r["test_set"], {}).setdefault(r["model"], {})[r["sample_id"]] = float(r["score"])
        labels[(r["test_set"], r["sample_id"])] = int(r["label"])
    out = []
    for test_set in sorted(by_test):
        inp = EnsembleInput.from_mapping(by_test[test_set])
        scores = ensemble_predict(inp)
        for sid, s in zip(inp.sample_ids, scores):
            out.append(dict(sample_id=sid, test_set=test_set, model=ENSEMBLE_NAME, experiment=experiment,
                            score=float(s), label=labels[(test_set, sid)]))
    return out
