"""Experiment configuration, stored as YAML."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import yaml

from ..augment import AugmentConfig
from ..backbones.registry import CORE_MODELS, MODEL_NAMES
from ..data_ingest import EXPERIMENTS, FULL_COUNTS, TEST_SET_IDS, PoolCounts
from ..trainer.loop import TrainConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    """One grid: every (experiment, depth, model) cell trained and tested.

    ``variant`` selects full-size (``"full"``) or desk-scale (``"toy"``)
    backbones; toy backbones take ``image_side`` inputs and never load
    pretrained weights.  ``counts`` overrides the expected pool sizes,
    which toy archives need.
    """

    experiments: tuple[str, ...] = ("A",)
    depths: tuple[int, ...] = (1, 2, 3)
    models: tuple[str, ...] = CORE_MODELS
    train: TrainConfig = field(default_factory=TrainConfig)
    augment: AugmentConfig | None = field(default_factory=AugmentConfig)
    seed: int = 0
    output_dir: str = "results"
    data_root: str | None = None
    variant: str = "full"
    image_side: int | None = None
    pretrained: bool = True
    weights_dir: str | None = None
    test_sets: tuple[str, ...] = TEST_SET_IDS
    counts: PoolCounts = FULL_COUNTS
    val_fraction_for_B: float = 0.2
    threshold: float = 0.5
    ensemble_exclude: tuple[str, ...] = ("resnet18",)
    deterministic: bool = True

    def __post_init__(self):
        bad = [e for e in self.experiments if e not in EXPERIMENTS]
        if bad:
            raise ConfigError(f"unknown experiments {bad}")
        if any(d not in (1, 2, 3) for d in self.depths):
            raise ConfigError("depths must be drawn from 1, 2, 3")
        bad = [m for m in self.models if m not in MODEL_NAMES]
        if bad:
            raise ConfigError(f"unknown models {bad}")
        bad = [t for t in self.test_sets if t not in TEST_SET_IDS]
        if bad:
            raise ConfigError(f"unknown test sets {bad}")
        for name in ("experiments", "depths", "models", "test_sets"):
            vals = getattr(self, name)
            if len(set(vals)) != len(vals):
                raise ConfigError(f"{name} contains duplicates")
        if self.variant not in ("full", "toy"):
            raise ConfigError("variant must be 'full' or 'toy'")

    @property
    def cells(self) -> list[tuple[str, int, str]]:
        return [(e, d, m) for e in self.experiments for d in self.depths for m in self.models]

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["train"] = self.train.to_dict()
        d["augment"] = None if self.augment is None else self.augment.to_dict()
        d["counts"] = asdict(self.counts)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        for k in ("augment",):
            if d[k]:
                d[k] = {a: list(b) if isinstance(b, tuple) else b for a, b in d[k].items()}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        if "train" in d:
            d["train"] = TrainConfig(**(d["train"] or {}))
        if "augment" in d and d["augment"] is not None:
            aug = {k: tuple(v) if isinstance(v, list) else v for k, v in d["augment"].items()}
            d["augment"] = AugmentConfig(**aug)
        if "counts" in d:
            d["counts"] = _counts(d["counts"])
        for k in ("experiments", "depths", "models", "test_sets", "ensemble_exclude"):
            if k in d:
                v = d[k]
                d[k] = tuple([v] if isinstance(v, (str, int)) else v)
        return cls(**d)

    def with_overrides(self, **kw) -> "ExperimentConfig":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})


def _counts(v) -> PoolCounts:
    if v is None or v == "full":
        return FULL_COUNTS
    if isinstance(v, PoolCounts):
        return v
    base = asdict(FULL_COUNTS)
    test = {**base.pop("test"), **(v.get("test") or {})}
    base.update({k: val for k, val in v.items() if k != "test"})
    return PoolCounts(test=test, **base)


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        data = yaml.safe_load(fh) or {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping at the top level")
    return ExperimentConfig.from_dict(data)


def save_config(cfg: ExperimentConfig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(yaml.safe_dump(cfg.to_dict(), sort_keys=False))
    return path
