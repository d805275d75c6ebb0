"""Recall on the L2 pool of confirmed lens candidates."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from ..metrics import DEFAULT_THRESHOLD
from .reference import L2_POOL_SIZE


class L2PoolSizeError(ValueError):
    pass


@dataclass(frozen=True)
class L2Result:
    model: str
    detections: int
    recall_pct: float
    pool_size: int = L2_POOL_SIZE

    def row(self) -> dict:
        return dict(model=self.model, detections=self.detections, pool_size=self.pool_size,
                    recall_pct=f"{self.recall_pct:.2f}")


def recall_pct(detections: int, pool_size: int = L2_POOL_SIZE) -> float:
    """``100 * detections / pool_size`` rounded to 2 decimals."""
    return round(100.0 * detections / pool_size, 2)


def l2_recall(scores: Sequence[float], threshold: float = DEFAULT_THRESHOLD, model: str = "",
              pool_size: int = L2_POOL_SIZE) -> L2Result:
    """Detections (``score > threshold``) and recall over the L2 pool."""
    scores = np.asarray(scores, dtype=float)
    if scores.ndim != 1 or scores.size != pool_size:
        raise L2PoolSizeError(f"L2 pool must hold exactly {pool_size} lenses, got {scores.size} scores")
    k = int(np.sum(scores > threshold))
    return L2Result(model, k, recall_pct(k, pool_size), pool_size)


def infer_l2(models: Mapping[str, Sequence[float]], threshold: float = DEFAULT_THRESHOLD,
             pool_size: int = L2_POOL_SIZE) -> list[L2Result]:
    """One :class:`L2Result` per model from its L2 lens-probability scores."""
    return [l2_recall(s, threshold, name, pool_size) for name, s in models.items()]


def l2_scores_for_handles(handles: Mapping[str, object], l2_dataset, batch_size: int = 128) -> dict[str, np.ndarray]:
    """Score the L2 pool with loaded backbones (eval mode)."""
    from ..trainer.loop import predict
    return {name: predict(h, l2_dataset, batch_size=batch_size) for name, h in handles.items()}
