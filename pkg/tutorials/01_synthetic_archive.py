"""Build a small synthetic archive and inspect the assembled datasets.

Real survey cutouts are not redistributable, so every tutorial runs on a
synthetic archive with the same layout: FITS cube stacks per pool plus a
``manifest.csv``.  Lenses carry a faint ring, non-lenses do not.

Run from the repository root::

    python3 tutorials/01_synthetic_archive.py
"""
from pathlib import Path

from lensfind.data_ingest import TEST_SET_IDS, DataCatalog, DatasetSpec, build_test_set, build_training_set
from lensfind.synthetic import make_synthetic_archive, toy_counts

ROOT = Path("data/toy")

# The L2 pool keeps its real size so recall percentages are meaningful.
counts = toy_counts(l2=138)
make_synthetic_archive(ROOT, counts, side=32, seed=0)
catalog = DataCatalog.from_root(ROOT)

for exp in "ABCS":
    train, val = build_training_set(DatasetSpec(exp), catalog, counts)
    print(f"training set {exp}: train {train.label_counts()}  val {val.label_counts()}")

for t in TEST_SET_IDS:
    print(f"test set {t}: {build_test_set(t, catalog, counts).label_counts()}")
