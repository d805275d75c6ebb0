"""FITS ingestion, band mapping and dataset assembly.

Every experiment draws its samples from named *pools* listed in a manifest
file under the data root:

* ``C21_train`` / ``C21_val`` -- mock lenses and non-lenses (72 px cubes)
* ``J24`` -- mock lenses and non-lenses (64 px cubes), no validation split
* ``L1``..``L4`` / ``N1``..``N5`` -- lens / non-lens pools of the common
  test sample (64 or 101 px cubes)

The manifest is a CSV file with one record per sample::

    path,index,label,pool
    c21/train_lenses.fits,0,1,C21_train

``index`` is empty for a file holding a single 3-plane cube and an integer
for files holding a stack of cubes (``N x 3 x H x W``).
"""
from __future__ import annotations

import csv
import functools
import os
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np
from astropy.io import fits

BANDS = ("g", "r", "i")
MANIFEST_NAME = "manifest.csv"
DATA_ROOT_ENV = "GRAVIT_DATA_ROOT"

EXPERIMENTS = ("A", "B", "C", "S")
TEST_SET_IDS = tuple("abcdefghijkl")
LENS_POOLS = ("L1", "L2", "L3", "L4")
NONLENS_POOLS = ("N1", "N2", "N3", "N4", "N5")


class IngestionError(Exception):
    """Base class for every data-ingestion failure."""


class MissingFileError(IngestionError, FileNotFoundError):
    pass


class PlaneCountError(IngestionError):
    pass


class NonSquareError(IngestionError):
    pass


class ManifestError(IngestionError):
    pass


class PoolMissingError(IngestionError):
    pass


class PoolUnderflowError(IngestionError):
    pass


class ClassImbalanceError(IngestionError):
    pass


@dataclass(frozen=True, eq=False)
class ImageCube:
    """Raw ``3 x H x W`` cube in (g, r, i) band order."""

    pixels: np.ndarray
    source_id: str = ""
    band_order: tuple[str, ...] = BANDS

    def __post_init__(self):
        if self.pixels.ndim != 3 or self.pixels.shape[0] != 3:
            raise PlaneCountError(
                f"{self.source_id or 'cube'}: expected exactly 3 band planes, "
                f"got array of shape {self.pixels.shape}"
            )
        if self.pixels.shape[1] != self.pixels.shape[2]:
            raise NonSquareError(
                f"{self.source_id or 'cube'}: planes must be square (H = W), "
                f"got {self.pixels.shape[1]}x{self.pixels.shape[2]}"
            )
        if tuple(self.band_order) != BANDS:
            raise IngestionError(f"band order must be {BANDS}, got {self.band_order}")

    @property
    def side_px(self) -> int:
        return int(self.pixels.shape[1])


@dataclass(frozen=True, eq=False)
class RgbImage:
    """``H x W x 3`` image with channels (R, G, B) = bands (i, r, g)."""

    pixels: np.ndarray
    source_id: str = ""

    def __post_init__(self):
        if self.pixels.ndim != 3 or self.pixels.shape[2] != 3:
            raise PlaneCountError(f"RGB image must be H x W x 3, got {self.pixels.shape}")
        if self.pixels.shape[0] != self.pixels.shape[1]:
            raise NonSquareError(f"RGB image must be square, got {self.pixels.shape[:2]}")

    @property
    def side_px(self) -> int:
        return int(self.pixels.shape[0])


@functools.lru_cache(maxsize=32)
def _read_fits(path: str) -> tuple[np.ndarray, fits.Header]:
    with fits.open(path, memmap=False) as hdul:
        for hdu in hdul:
            if hdu.data is not None:
                data = np.asarray(hdu.data)
                # FITS is big-endian; convert to native order without changing values
                data = data.astype(data.dtype.newbyteorder("="), copy=False)
                return data, hdu.header.copy()
    raise PlaneCountError(f"{path}: no image data in any HDU")


def load_fits_cube(path: str | os.PathLike, index: int | None = None) -> ImageCube:
    """Read one ``3 x H x W`` cube from a FITS file.

    Parameters
    ----------
    path : path to the FITS file.
    index : position of the cube inside a ``N x 3 x H x W`` stack; ``None``
        for single-cube files.

    Raises
    ------
    MissingFileError, PlaneCountError, NonSquareError
    """
    path = str(path)
    if not os.path.isfile(path):
        raise MissingFileError(f"FITS file not found: {path}")
    data, header = _read_fits(path)
    source_id = sample_id_for(path, index)

    if data.ndim == 4:
        if index is None:
            raise PlaneCountError(f"{path}: file holds a stack of {data.shape[0]} cubes; an index is required")
        cube = data[index]
    elif data.ndim == 3:
        if index not in (None, 0):
            raise IngestionError(f"{path}: single-cube file cannot be indexed with {index}")
        cube = data
    else:
        raise PlaneCountError(f"{source_id}: expected a 3-plane cube, got {data.ndim}-d data {data.shape}")

    if cube.shape[0] != 3:
        raise PlaneCountError(f"{source_id}: expected exactly 3 band planes, got {cube.shape[0]}")
    width, height = header.get("NAXIS1"), header.get("NAXIS2")
    if width != height or cube.shape[1] != cube.shape[2]:
        raise NonSquareError(f"{source_id}: planes must be square, header says {width}x{height}")
    return ImageCube(pixels=np.array(cube), source_id=source_id)


def write_fits_cube(path: str | os.PathLike, pixels: np.ndarray, overwrite: bool = True) -> None:
    """Write a cube (``3 x H x W``) or a cube stack (``N x 3 x H x W``)."""
    hdu = fits.PrimaryHDU(np.asarray(pixels))
    hdu.header["BANDS"] = "".join(BANDS)
    hdu.writeto(str(path), overwrite=overwrite)
    _read_fits.cache_clear()


def cube_to_rgb(cube: ImageCube) -> RgbImage:
    # (g, r, i) -> (i, r, g): longest wavelength in the red channel
    rgb = np.moveaxis(cube.pixels[::-1], 0, -1)
    return RgbImage(pixels=np.ascontiguousarray(rgb), source_id=cube.source_id)


def rgb_to_cube(img: RgbImage) -> ImageCube:
    planes = np.moveaxis(img.pixels, -1, 0)[::-1]
    return ImageCube(pixels=np.ascontiguousarray(planes), source_id=img.source_id)


# ---------------------------------------------------------------------------
# manifests and pools


def sample_id_for(path: str, index: int | None) -> str:
    return path if index is None else f"{path}#{index}"


@dataclass(frozen=True)
class SampleRef:
    path: str
    index: int | None
    label: int
    pool: str

    @property
    def sample_id(self) -> str:
        return sample_id_for(self.path, self.index)


def read_manifest(path: str | os.PathLike) -> list[SampleRef]:
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(f"manifest not found: {path}")
    records = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"path", "index", "label", "pool"} - set(reader.fieldnames or ())
        if missing:
            raise ManifestError(f"{path}: missing columns {sorted(missing)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                label = int(row["label"])
                index = int(row["index"]) if row["index"].strip() else None
            except ValueError as exc:
                raise ManifestError(f"{path}:{lineno}: {exc}") from None
            if label not in (0, 1):
                raise ManifestError(f"{path}:{lineno}: label must be 0 or 1, got {label}")
            records.append(SampleRef(row["path"], index, label, row["pool"]))
    return records


def write_manifest(path: str | os.PathLike, records: Iterable[SampleRef]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["path", "index", "label", "pool"])
        for r in records:
            writer.writerow([r.path, "" if r.index is None else r.index, r.label, r.pool])


def resolve_data_root(data_root: str | os.PathLike | None = None) -> Path:
    """``--data-root`` if given, else ``$GRAVIT_DATA_ROOT``."""
    if data_root is None:
        data_root = os.environ.get(DATA_ROOT_ENV)
    if not data_root:
        raise IngestionError(f"no data root: pass --data-root or set {DATA_ROOT_ENV}")
    return Path(data_root)


class DataCatalog:
    """Manifest records grouped by pool, with paths resolved against ``root``."""

    def __init__(self, root: str | os.PathLike, records: Sequence[SampleRef]):
        self.root = Path(root)
        pools: dict[str, list[SampleRef]] = {}
        for r in records:
            pools.setdefault(r.pool, []).append(r)
        self.pools = {k: tuple(v) for k, v in pools.items()}

    @classmethod
    def from_root(cls, data_root=None, manifest: str = MANIFEST_NAME) -> "DataCatalog":
        root = resolve_data_root(data_root)
        return cls(root, read_manifest(root / manifest))

    def pool(self, name: str) -> tuple[SampleRef, ...]:
        if name not in self.pools:
            raise PoolMissingError(f"pool {name!r} not found in manifest (have {sorted(self.pools)})")
        return self.pools[name]

    def pool_class(self, name: str, label: int) -> list[SampleRef]:
        return [r for r in self.pool(name) if r.label == label]

    def resolve(self, ref: SampleRef) -> Path:
        p = Path(ref.path)
        return p if p.is_absolute() else self.root / p

    def load(self, ref: SampleRef) -> RgbImage:
        return cube_to_rgb(load_fits_cube(self.resolve(ref), ref.index))


# ---------------------------------------------------------------------------
# sample counts


@dataclass(frozen=True)
class PoolCounts:
    """Per-class pool sizes the assembly rules expect.

    The defaults are the published sizes; toy archives pass smaller values.
    """

    c21_train: int = 40_000
    c21_val: int = 500
    j24: int = 18_660
    s_subsample: int = 18_660
    test: dict = field(default_factory=lambda: {
        # L1 + L2 = 181 and L2 alone holds the 138 candidates used for recall
        "L1": 43, "L2": 138, "L3": 3_000, "L4": 3_000,
        "N1": 3_000, "N2": 3_000, "N3": 3_000, "N4": 3_000, "N5": 730,
    })

    def __hash__(self):
        return hash((self.c21_train, self.c21_val, self.j24, self.s_subsample,
                     tuple(sorted(self.test.items()))))


FULL_COUNTS = PoolCounts()

# id -> (lens pools, non-lens pools, resolution)
TEST_SET_POOLS: dict[str, tuple[tuple[str, ...], tuple[str, ...], str]] = {
    "a": (("L1", "L2"), ("N1",), "64"),
    "b": (("L1", "L2"), ("N2",), "64"),
    "c": (("L1", "L2"), ("N3",), "64"),
    "d": (("L1", "L2"), ("N4",), "64/101"),
    "e": (("L1", "L2"), ("N5",), "64"),
    "f": (("L1", "L2"), NONLENS_POOLS, "64/101"),
    "g": (("L3",), ("N2",), "64"),
    "h": (("L3",), ("N3",), "64"),
    "i": (("L3",), ("N4",), "64/101"),
    "j": (("L4",), ("N2",), "64/101"),
    "k": (("L4",), ("N4",), "101"),
    "l": (LENS_POOLS, NONLENS_POOLS, "64/101"),
}


@dataclass(frozen=True)
class TestSetComposition:
    __test__ = False  # not a pytest class

    id: str
    lens_pools: tuple[str, ...]
    nonlens_pools: tuple[str, ...]
    lens_count: int
    nonlens_count: int
    resolution: str = ""

    @property
    def total(self) -> int:
        return self.lens_count + self.nonlens_count


def composition_for(test_id: str, counts: PoolCounts = FULL_COUNTS) -> TestSetComposition:
    if test_id not in TEST_SET_POOLS:
        raise KeyError(f"unknown test set {test_id!r}; expected one of a..l")
    lens, nonlens, res = TEST_SET_POOLS[test_id]
    return TestSetComposition(
        id=test_id,
        lens_pools=lens,
        nonlens_pools=nonlens,
        lens_count=sum(counts.test[p] for p in lens),
        nonlens_count=sum(counts.test[p] for p in nonlens),
        resolution=res,
    )


# ---------------------------------------------------------------------------
# datasets


@dataclass(frozen=True)
class DatasetSpec:
    experiment: str
    seed: int = 0
    val_fraction_for_B: float = 0.2

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"experiment must be one of {EXPERIMENTS}, got {self.experiment!r}")
        if not 0.0 < self.val_fraction_for_B < 1.0:
            raise ValueError("val_fraction_for_B must lie in (0, 1)")


class LabeledDataset:
    """Immutable sequence of sample references with lazy image loading."""

    def __init__(self, samples: Sequence[SampleRef], name: str, provenance=None,
                 catalog: DataCatalog | None = None, role: str | None = None):
        self.samples = tuple(samples)
        self.name = name
        self.provenance = provenance
        self.role = role
        self.catalog = catalog

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self) -> Iterator[SampleRef]:
        return iter(self.samples)

    def __repr__(self):
        counts = self.label_counts()
        return f"LabeledDataset({self.name!r}, lenses={counts[1]}, non_lenses={counts[0]})"

    @property
    def labels(self) -> np.ndarray:
        return np.array([s.label for s in self.samples], dtype=np.int64)

    @property
    def sample_ids(self) -> list[str]:
        return [s.sample_id for s in self.samples]

    def label_counts(self) -> dict[int, int]:
        c = Counter(s.label for s in self.samples)
        return {0: c.get(0, 0), 1: c.get(1, 0)}

    def image(self, i: int) -> RgbImage:
        if self.catalog is None:
            raise IngestionError(f"dataset {self.name!r} has no catalog to load images from")
        return self.catalog.load(self.samples[i])


def _take(refs: Sequence[SampleRef], n: int, what: str) -> list[SampleRef]:
    if len(refs) < n:
        raise PoolUnderflowError(f"{what}: requested {n} samples but only {len(refs)} available")
    return list(refs[:n])


def _check_balanced(ds: LabeledDataset) -> None:
    c = ds.label_counts()
    if c[0] != c[1]:
        raise ClassImbalanceError(f"{ds.name}: {c[1]} lenses vs {c[0]} non-lenses after assembly")


def _check_disjoint(train: LabeledDataset, val: LabeledDataset) -> None:
    shared = set(train.sample_ids) & set(val.sample_ids)
    if shared:
        raise IngestionError(f"{len(shared)} samples appear in both train and val, e.g. {sorted(shared)[0]}")


def _c21(catalog: DataCatalog, counts: PoolCounts):
    train = [r for label in (1, 0) for r in _take(catalog.pool_class("C21_train", label),
                                                     counts.c21_train, f"C21_train label={label}")]
    val = [r for label in (1, 0) for r in _take(catalog.pool_class("C21_val", label),
                                                   counts.c21_val, f"C21_val label={label}")]
    return train, val


def _j24(catalog: DataCatalog, counts: PoolCounts, spec: DatasetSpec):
    # stratified split, seeded; 18,660/class at 0.2 gives 14,928 / 3,732
    rng = np.random.default_rng(spec.seed)
    train, val = [], []
    for label in (1, 0):
        refs = _take(catalog.pool_class("J24", label), counts.j24, f"J24 label={label}")
        n_val = int(round(spec.val_fraction_for_B * len(refs)))
        perm = rng.permutation(len(refs))
        val_idx = np.sort(perm[:n_val])
        train_idx = np.sort(perm[n_val:])
        train += [refs[i] for i in train_idx]
        val += [refs[i] for i in val_idx]
    return train, val


def _subsample_c21(catalog: DataCatalog, counts: PoolCounts, spec: DatasetSpec):
    rng = np.random.default_rng(spec.seed)
    train = []
    for label in (1, 0):
        refs = catalog.pool_class("C21_train", label)
        if len(refs) < counts.s_subsample:
            raise PoolUnderflowError(
                f"S subsample: requested {counts.s_subsample} per class but C21_train label={label} "
                f"has only {len(refs)}")
        idx = np.sort(rng.choice(len(refs), size=counts.s_subsample, replace=False))
        train += [refs[i] for i in idx]
    val = [r for label in (1, 0) for r in _take(catalog.pool_class("C21_val", label),
                                                   counts.c21_val, f"C21_val label={label}")]
    return train, val


def build_training_set(spec: DatasetSpec, catalog: DataCatalog,
                       counts: PoolCounts = FULL_COUNTS) -> tuple[LabeledDataset, LabeledDataset]:
    """Assemble the (train, val) pair for experiment A, B, C or S.

    A uses the C21 train/validation pools as delivered, B splits J24 into
    train/val by ``spec.val_fraction_for_B``, C is the union of the A and B
    pairs and S subsamples ``counts.s_subsample`` per class from C21 train
    while reusing the C21 validation pool.
    """
    if spec.experiment == "A":
        train, val = _c21(catalog, counts)
    elif spec.experiment == "B":
        train, val = _j24(catalog, counts, spec)
    elif spec.experiment == "C":
        a_train, a_val = _c21(catalog, counts)
        b_train, b_val = _j24(catalog, counts, spec)
        train, val = a_train + b_train, a_val + b_val
    else:
        train, val = _subsample_c21(catalog, counts, spec)

    train_ds = LabeledDataset(train, f"{spec.experiment}-train", spec, catalog, role="train")
    val_ds = LabeledDataset(val, f"{spec.experiment}-val", spec, catalog, role="val")
    for ds in (train_ds, val_ds):
        _check_balanced(ds)
    _check_disjoint(train_ds, val_ds)
    return train_ds, val_ds


def build_test_set(test_id: str, catalog: DataCatalog,
                   counts: PoolCounts = FULL_COUNTS) -> LabeledDataset:
    """Assemble test set ``a``..``l`` from its lens and non-lens pools."""
    comp = composition_for(test_id, counts)
    samples = []
    for pools, label in ((comp.lens_pools, 1), (comp.nonlens_pools, 0)):
        for pool in pools:
            refs = catalog.pool(pool)
            wrong = [r for r in refs if r.label != label]
            if wrong:
                raise ManifestError(f"pool {pool} holds {len(wrong)} samples with label != {label}")
            samples += _take(refs, counts.test[pool], f"pool {pool}")
    ds = LabeledDataset(samples, f"test-{test_id}", comp, catalog, role="test")
    c = ds.label_counts()
    if (c[1], c[0]) != (comp.lens_count, comp.nonlens_count):
        raise IngestionError(f"test set {test_id}: assembled {c[1]}/{c[0]}, "
                             f"expected {comp.lens_count}/{comp.nonlens_count}")
    return ds
