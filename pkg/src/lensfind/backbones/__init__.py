"""Classifier registry, reference toy networks and freezing policies."""
from .registry import (BASELINE_MODELS, DISPLAY_NAMES, MODEL_NAMES, CORE_MODELS, REGISTRY,
                       BackboneError, BackboneHandle, FinetunePolicy, FreezePartition,
                       HeadMismatchError, HubWeightProvider, LocalWeightProvider, ParamGroup,
                       UnknownBackboneError, WeightsUnavailableError, apply_finetune_policy,
                       create_backbone, trainable_group_names)
from .toy import (MIXER_BASE, VIT_BASE, ToyMixer, ToyMixerConfig, ToyViT, ToyViTConfig,
                  toy_mixer_forward, toy_vit_forward)
