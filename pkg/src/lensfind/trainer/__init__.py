"""Fine-tuning loop and its optimization pieces."""
from .optim import (AdamW, EarlyStopState, PlateauState, adamw_step, early_stop_check,
                    plateau_scheduler_step)
from .stochastic_depth import DropPath, drop_path, stochastic_depth_apply

_LOOP_NAMES = ("CheckpointRecord", "EpochStats", "ImageDataset", "NonFiniteLossError", "TrainConfig",
               "TrainingError", "load_checkpoint", "predict", "read_history", "save_checkpoint", "train")

__all__ = ["AdamW", "EarlyStopState", "PlateauState", "adamw_step", "early_stop_check",
           "plateau_scheduler_step", "DropPath", "drop_path", "stochastic_depth_apply", *_LOOP_NAMES]


def __getattr__(name):
    # the loop imports backbones, whose toy models import this package
    if name in _LOOP_NAMES:
        from . import loop
        return getattr(loop, name)
    raise AttributeError(name)
