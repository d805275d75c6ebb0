"""Experiment grid, L2 recall, comparison reports and figures."""
from .config import ConfigError, ExperimentConfig, load_config, save_config
from .grid import GridResult, cell_dir, cell_label, collect_predictions, run_grid
from .l2 import L2PoolSizeError, L2Result, infer_l2, l2_recall, recall_pct
from .reference import REFERENCE, ReferenceTable
from .reports import compare_to_reference, complexity_report, render_comparison
