"""Fine-tune one toy backbone at each freezing depth.

Depth 1 trains the head alone, depth 2 the later half of the blocks plus the
head, depth 3 everything.  The script prints how many tensors each policy
leaves trainable and the best validation loss reached.

Requires the archive from ``01_synthetic_archive.py``.
"""
from pathlib import Path

from lensfind.augment import AugmentConfig
from lensfind.backbones import FinetunePolicy, apply_finetune_policy, create_backbone
from lensfind.backbones.complexity import count_parameters
from lensfind.data_ingest import DataCatalog, DatasetSpec, build_training_set
from lensfind.synthetic import toy_counts
from lensfind.trainer import TrainConfig, train

catalog = DataCatalog.from_root(Path("data/toy"))
train_set, val_set = build_training_set(DatasetSpec("A"), catalog, toy_counts(l2=138))
cfg = TrainConfig(max_epochs=5, batch_size=8)

for policy in FinetunePolicy:
    handle = create_backbone("vit", variant="toy", image_side=32)
    part = apply_finetune_policy(handle, policy)
    print(f"depth {int(policy)}: trainable groups {part.trainable}")
    print(f"  {count_parameters(handle, trainable_only=True):,} of {count_parameters(handle):,} parameters train")
    record = train(handle, policy, train_set, val_set, cfg, augment=AugmentConfig())
    print(f"  best val loss {record.best_val_loss:.4f} at epoch {record.best_epoch}")
