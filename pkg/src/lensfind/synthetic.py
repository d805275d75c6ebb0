"""Toy lens/non-lens archives for desk-scale runs and tests.

Non-lenses are a red elliptical galaxy on a noisy background; lenses add a
blue arc at a random Einstein-like radius.  The images are deliberately easy
to separate: they exist to exercise the pipeline, not to model real lenses.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .data_ingest import (
    LENS_POOLS,
    MANIFEST_NAME,
    NONLENS_POOLS,
    PoolCounts,
    SampleRef,
    write_fits_cube,
    write_manifest,
)

# per-band brightness (g, r, i)
_GALAXY_SED = np.array([0.4, 0.7, 1.0])
_ARC_SED = np.array([1.0, 0.6, 0.3])


def toy_cube(side: int, lens: bool, rng: np.random.Generator, noise: float = 0.05) -> np.ndarray:
    """One ``3 x side x side`` float32 cube."""
    yy, xx = np.mgrid[0:side, 0:side].astype(np.float64)
    c = (side - 1) / 2.0
    dx, dy = xx - c - rng.normal(0, 0.5), yy - c - rng.normal(0, 0.5)
    q = rng.uniform(0.6, 1.0)
    theta = rng.uniform(0, np.pi)
    u = dx * np.cos(theta) + dy * np.sin(theta)
    v = -dx * np.sin(theta) + dy * np.cos(theta)
    sigma = side / 12.0
    galaxy = np.exp(-0.5 * (u**2 + (v / q) ** 2) / sigma**2)
    cube = _GALAXY_SED[:, None, None] * galaxy[None]
    if lens:
        radius = rng.uniform(0.25, 0.38) * side
        r = np.hypot(dx, dy)
        phi = np.arctan2(dy, dx)
        width = max(side / 40.0, 0.6)
        arc = np.exp(-0.5 * ((r - radius) / width) ** 2)
        arc *= 0.5 + 0.5 * np.cos(phi - rng.uniform(-np.pi, np.pi))
        cube = cube + 0.8 * _ARC_SED[:, None, None] * arc[None]
    cube = cube + rng.normal(0.0, noise, size=cube.shape)
    return cube.astype(np.float32)


def toy_counts(c21_train=12, c21_val=4, j24=10, s_subsample=6, test_per_pool=6, l2=None) -> PoolCounts:
    test = {p: test_per_pool for p in LENS_POOLS + NONLENS_POOLS}
    if l2 is not None:
        test["L2"] = l2
    return PoolCounts(c21_train=c21_train, c21_val=c21_val, j24=j24, s_subsample=s_subsample, test=test)


def make_synthetic_archive(root, counts: PoolCounts, side: int = 24, seed: int = 0,
                           sides: dict | None = None) -> Path:
    """Write FITS cube stacks for every pool plus ``manifest.csv`` under ``root``.

    ``sides`` overrides the image side per pool (e.g. 101 px test pools).
    """
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    sides = sides or {}
    rng = np.random.default_rng(seed)
    records: list[SampleRef] = []

    def write_pool(pool: str, label: int, n: int, tag: str):
        s = sides.get(pool, side)
        stack = np.stack([toy_cube(s, bool(label), rng) for _ in range(n)]) if n else np.zeros((0, 3, s, s), np.float32)
        rel = f"{pool}_{tag}.fits"
        write_fits_cube(root / rel, stack)
        records.extend(SampleRef(rel, i, label, pool) for i in range(n))

    for label, tag in ((1, "lenses"), (0, "nonlenses")):
        write_pool("C21_train", label, counts.c21_train, tag)
        write_pool("C21_val", label, counts.c21_val, tag)
        write_pool("J24", label, counts.j24, tag)
    for pool in LENS_POOLS:
        write_pool(pool, 1, counts.test[pool], "lenses")
    for pool in NONLENS_POOLS:
        write_pool(pool, 0, counts.test[pool], "nonlenses")

    write_manifest(root / MANIFEST_NAME, records)
    return root


def manifest_records(counts: PoolCounts) -> list[SampleRef]:
    """Manifest records for an archive of the given sizes, without image files.

    Enough for dataset bookkeeping (assembly never opens the FITS files).
    """
    records: list[SampleRef] = []

    def pool(name: str, label: int, n: int, tag: str):
        records.extend(SampleRef(f"{name}_{tag}.fits", i, label, name) for i in range(n))

    for label, tag in ((1, "lenses"), (0, "nonlenses")):
        pool("C21_train", label, counts.c21_train, tag)
        pool("C21_val", label, counts.c21_val, tag)
        pool("J24", label, counts.j24, tag)
    for name in LENS_POOLS:
        pool(name, 1, counts.test[name], "lenses")
    for name in NONLENS_POOLS:
        pool(name, 0, counts.test[name], "nonlenses")
    return records
