"""Strong-lens classification by fine-tuning vision backbones.

Modules
-------
data_ingest   FITS cubes, band mapping, training and test set assembly
augment       training augmentation and evaluation resize/normalize
backbones     architecture registry, toy ViT/Mixer, freezing depths, complexity
trainer       AdamW, plateau schedule, early stopping, stochastic depth, loop
metrics       confusion statistics, F1, ROC and AUC
ensemble      uniform soft voting
harness       experiment grid, L2 recall, reports, plots
"""
__version__ = "0.1.0"
