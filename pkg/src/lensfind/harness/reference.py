"""Published comparison constants.

Values are rendered next to this package's own results in comparison
reports.  Nothing here is used to judge correctness of the implementation.
"""
from __future__ import annotations

from dataclasses import dataclass
from types import MappingProxyType

CELLS = tuple(f"{e}{d}" for e in "ABCS" for d in (1, 2, 3))
REFERENCE_NETWORKS = ("C21", "S22", "J24", "I24")

# rows: test set; columns: A1..S3 ensemble, then C21, S22, J24, I24
_AUC = """
a 0.94 0.96 0.93 0.64 0.72 0.79 0.91 0.94 0.92 0.94 0.97 0.93 0.97 0.98 0.86 0.80
b 0.93 0.96 0.95 0.71 0.76 0.80 0.93 0.96 0.94 0.92 0.97 0.95 0.97 0.91 0.90 0.80
c 0.93 0.94 0.89 0.59 0.70 0.80 0.88 0.93 0.90 0.92 0.96 0.90 0.97 0.99 0.88 0.83
d 0.99 1.00 0.98 0.66 0.76 0.83 0.97 0.99 0.99 0.98 1.00 0.99 0.94 0.96 0.97 0.87
e 0.90 0.93 0.91 0.73 0.81 0.85 0.90 0.96 0.93 0.89 0.95 0.92 0.96 0.90 0.84 0.79
f 0.94 0.97 0.94 0.65 0.74 0.81 0.92 0.96 0.94 0.94 0.97 0.94 0.96 0.96 0.90 0.82
g 1.00 1.00 1.00 0.66 0.66 0.70 0.99 1.00 1.00 0.99 1.00 1.00 1.00 0.99 0.90 0.71
h 1.00 1.00 1.00 0.49 0.54 0.69 0.98 1.00 1.00 1.00 1.00 1.00 1.00 1.00 0.88 0.76
i 1.00 1.00 1.00 0.59 0.65 0.73 1.00 1.00 1.00 1.00 1.00 1.00 1.00 1.00 0.96 0.82
j 0.33 0.21 0.36 0.92 0.95 0.97 0.74 0.64 0.78 0.35 0.26 0.25 0.80 0.70 0.98 0.99
k 0.54 0.48 0.61 0.93 0.98 0.98 0.85 0.89 0.94 0.52 0.49 0.62 0.65 0.81 0.99 0.99
l 0.67 0.62 0.68 0.74 0.79 0.84 0.86 0.83 0.88 0.67 0.64 0.65 0.87 0.91 0.94 0.87
"""

_F1 = """
a 0.51 0.56 0.63 0.20 0.39 0.45 0.68 0.79 0.54 0.50 0.66 0.57 0.77 0.76 0.55 0.45
b 0.45 0.57 0.74 0.20 0.28 0.32 0.51 0.61 0.66 0.43 0.64 0.64 0.74 0.53 0.61 0.47
c 0.43 0.40 0.45 0.18 0.45 0.48 0.34 0.49 0.42 0.44 0.50 0.37 0.78 0.77 0.62 0.48
d 0.78 0.89 0.83 0.24 0.48 0.48 0.73 0.92 0.88 0.75 0.91 0.88 0.68 0.72 0.74 0.51
e 0.67 0.66 0.76 0.45 0.59 0.64 0.64 0.83 0.79 0.67 0.73 0.71 0.77 0.70 0.69 0.52
f 0.21 0.23 0.32 0.07 0.17 0.20 0.21 0.34 0.27 0.20 0.31 0.24 0.59 0.47 0.35 0.37
g 0.95 0.97 0.99 0.29 0.31 0.34 0.95 0.97 0.98 0.94 0.98 0.98 0.99 0.94 0.70 0.25
h 0.94 0.93 0.95 0.28 0.32 0.36 0.91 0.95 0.94 0.94 0.95 0.93 1.00 0.96 0.70 0.25
i 0.99 1.00 1.00 0.29 0.33 0.36 0.98 1.00 1.00 0.99 1.00 1.00 0.99 0.96 0.71 0.25
j 0.07 0.05 0.08 0.83 0.89 0.91 0.39 0.32 0.48 0.08 0.05 0.08 0.18 0.30 0.95 0.95
k 0.07 0.05 0.08 0.85 0.93 0.94 0.41 0.33 0.50 0.08 0.05 0.08 0.17 0.31 0.97 0.96
l 0.62 0.62 0.65 0.56 0.65 0.68 0.70 0.71 0.74 0.62 0.64 0.63 0.70 0.70 0.82 0.68
"""


def _parse(block: str) -> dict[tuple[str, str], float]:
    out = {}
    for line in block.strip().splitlines():
        test, *vals = line.split()
        for col, v in zip(CELLS + REFERENCE_NETWORKS, vals, strict=True):
            out[(test, col)] = float(v)
    return out


@dataclass(frozen=True)
class BestModel:
    test_set: str
    cell: str
    model: str
    auc: float
    reference_auc: float
    reference_source: str
    note: str = ""


# "0.99 recurring" entries round to 1.00 but are reported below it
_BEST = (
    BestModel("a", "S2", "Ensemble", 0.97, 0.98, "S22"),
    BestModel("b", "S2", "Ensemble", 0.97, 0.97, "C21"),
    BestModel("c", "S2", "deit3", 0.96, 0.99, "S22"),
    BestModel("d", "A3", "resnet18", 0.99, 0.97, "J24", "0.99 recurring"),
    BestModel("e", "C2", "Ensemble", 0.95, 0.96, "C21"),
    BestModel("f", "S2", "Ensemble", 0.97, 0.96, "C21, S22"),
    BestModel("g", "A3", "cait", 0.99, 1.00, "C21", "0.99 recurring"),
    BestModel("h", "A2", "cait", 0.99, 1.00, "C21, S22", "0.99 recurring"),
    BestModel("i", "A3", "resnet18", 0.99, 1.00, "C21, S22", "0.99 recurring"),
    BestModel("j", "B3", "twins_pcpvt", 0.97, 0.99, "I24"),
    BestModel("k", "B3", "Ensemble", 0.98, 0.99, "J24, I24"),
    BestModel("l", "C3", "mlp_mixer", 0.92, 0.94, "J24"),
)


@dataclass(frozen=True)
class L2Detection:
    cell: str
    models: tuple[str, ...]
    detections: int
    recall_pct: float


L2_POOL_SIZE = 138

_L2 = (
    L2Detection("A1", ("swin",), 126, 91.30),
    L2Detection("A2", ("mlp_mixer",), 132, 95.65),
    L2Detection("A3", ("pit",), 128, 92.75),
    L2Detection("B1", ("vit",), 69, 50.00),
    L2Detection("B2", ("vit", "deit"), 79, 57.25),
    L2Detection("B3", ("mlp_mixer",), 80, 57.97),
    L2Detection("C1", ("swin",), 120, 86.96),
    L2Detection("C2", ("mlp_mixer",), 128, 92.75),
    L2Detection("C3", ("resnet18",), 131, 94.93),
    L2Detection("S1", ("swin",), 124, 89.86),
    L2Detection("S2", ("mlp_mixer", "Ensemble"), 129, 93.48),
    L2Detection("S3", ("pit",), 130, 94.20),
)


class ReferenceTable:
    """Read-only lookup of published ensemble AUC/F1 per (test set, cell)."""

    def __init__(self):
        self._auc = MappingProxyType(_parse(_AUC))
        self._f1 = MappingProxyType(_parse(_F1))
        self.best_models = _BEST
        self.l2_detections = _L2

    def auc(self, test_set: str, cell: str) -> float:
        return self._auc[(test_set, cell)]

    def f1(self, test_set: str, cell: str) -> float:
        return self._f1[(test_set, cell)]

    def value(self, metric: str, test_set: str, cell: str) -> float | None:
        table = {"auc": self._auc, "f1": self._f1}[metric]
        return table.get((test_set, cell))

    def best_for(self, test_set: str) -> BestModel:
        return next(b for b in self.best_models if b.test_set == test_set)


REFERENCE = ReferenceTable()
