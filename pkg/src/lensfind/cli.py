"""Command-line entry point: ``lensfind <subcommand> ...``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .backbones.registry import MODEL_NAMES
from .data_ingest import EXPERIMENTS, TEST_SET_IDS, DataCatalog, DatasetSpec, build_test_set, build_training_set

log = logging.getLogger("lensfind")


def _csv_list(cast=str):
    def parse(s):
        return tuple(cast(x) for x in s.split(",") if x)
    return parse


def _common(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("experiment")
    g.add_argument("--config", type=Path, help="YAML experiment config")
    g.add_argument("--data-root", help="data directory with manifest.csv (default: $GRAVIT_DATA_ROOT)")
    g.add_argument("--output-dir", help="results directory")
    g.add_argument("--variant", choices=("full", "toy"))
    g.add_argument("--image-side", type=int, help="input side for toy backbones")
    g.add_argument("--models", type=_csv_list(), help=f"comma list from {','.join(MODEL_NAMES)}")
    g.add_argument("--experiments", type=_csv_list(), help="comma list from A,B,C,S")
    g.add_argument("--depths", type=_csv_list(int), help="comma list from 1,2,3")
    g.add_argument("--test-sets", type=_csv_list(), help="comma list from a..l")
    g.add_argument("--weights-dir", help="local pretrained weights (<id>.pt files)")
    g.add_argument("--no-pretrained", action="store_true", help="random initialisation")
    g.add_argument("--include-resnet", action="store_true", help="add resnet18 to the ensemble")
    t = p.add_argument_group("training")
    t.add_argument("--epochs", type=int)
    t.add_argument("--batch-size", type=int)
    t.add_argument("--lr", type=float)
    t.add_argument("--seed", type=int)
    t.add_argument("--mixed-precision", action="store_true")
    t.add_argument("--no-augment", action="store_true", help="disable training augmentation (p_apply = 0)")


def config_from_args(args):
    from .harness.config import ExperimentConfig, load_config

    cfg = load_config(args.config) if getattr(args, "config", None) else ExperimentConfig()
    train = cfg.train
    tk = dict(max_epochs=args.epochs, batch_size=args.batch_size, lr=args.lr, seed=args.seed)
    train = replace(train, **{k: v for k, v in tk.items() if v is not None})
    if args.mixed_precision:
        train = replace(train, mixed_precision=True)
    aug = cfg.augment
    if args.no_augment and aug is not None:
        aug = replace(aug, p_apply=0.0)
    cfg = cfg.with_overrides(
        data_root=args.data_root, output_dir=args.output_dir, variant=args.variant, image_side=args.image_side,
        models=args.models, experiments=args.experiments, depths=args.depths, test_sets=args.test_sets,
        weights_dir=args.weights_dir, seed=args.seed)
    cfg = replace(cfg, train=train, augment=aug)
    if args.no_pretrained:
        cfg = replace(cfg, pretrained=False)
    if args.include_resnet:
        cfg = replace(cfg, ensemble_exclude=tuple(m for m in cfg.ensemble_exclude if m != "resnet18"))
    return cfg


def _cell_arg(s: str) -> tuple[str, int]:
    if len(s) != 2 or s[0] not in EXPERIMENTS or s[1] not in "123":
        raise argparse.ArgumentTypeError(f"expected an experiment cell like A2, got {s!r}")
    return s[0], int(s[1])


# ---------------------------------------------------------------------------
# subcommands


def cmd_ingest(args) -> int:
    cfg = config_from_args(args)
    catalog = DataCatalog.from_root(cfg.data_root)
    print(f"{'dataset':<10} {'lenses':>8} {'non-lenses':>11} {'total':>8}")
    for e in cfg.experiments:
        tr, va = build_training_set(DatasetSpec(e, cfg.seed, cfg.val_fraction_for_B), catalog, cfg.counts)
        for ds in (tr, va):
            c = ds.label_counts()
            print(f"{ds.name:<10} {c[1]:>8} {c[0]:>11} {len(ds):>8}")
    for t in cfg.test_sets:
        ds = build_test_set(t, catalog, cfg.counts)
        c = ds.label_counts()
        print(f"{ds.name:<10} {c[1]:>8} {c[0]:>11} {len(ds):>8}")
    return 0


def cmd_train(args) -> int:
    from .harness.grid import _Data, train_cell

    cfg = config_from_args(args)
    e, d = args.cell
    data = _Data(cfg)
    for m in cfg.models:
        train_cell(cfg, e, d, m, data)
        print(f"trained {e}{d}/{m}")
    return 0


def _load_handle(cfg, e, d, m):
    from .harness.grid import build_handle, cell_dir
    from .trainer.loop import load_checkpoint

    handle = build_handle(replace(cfg, pretrained=False), m)
    load_checkpoint(cell_dir(cfg.output_dir, e, d, m), handle)
    return handle


def cmd_evaluate(args) -> int:
    from .harness.grid import _Data, evaluate_cell
    from .metrics import write_metrics

    cfg = config_from_args(args)
    e, d = args.cell
    data = _Data(cfg)
    for m in cfg.models:
        rows = evaluate_cell(cfg, _load_handle(cfg, e, d, m), e, d, m, data)
        write_metrics(Path(cfg.output_dir) / "metrics.csv", rows, append=True)
        for r in rows:
            print(f"{r['experiment']} {m:<12} {r['test_set']} auc={r['auc']:.4f} f1={r['f1']:.4f}")
    return 0


def cmd_ensemble(args) -> int:
    from .harness.grid import collect_predictions, ensemble_cell
    from .metrics import write_metrics

    cfg = config_from_args(args)
    e, d = args.cell
    preds = [r for r in collect_predictions(cfg.output_dir) if r["experiment"] == f"{e}{d}"]
    rows = ensemble_cell(cfg, e, d, preds)
    write_metrics(Path(cfg.output_dir) / "metrics.csv", rows, append=True)
    for r in rows:
        print(f"{r['experiment']} Ensemble {r['test_set']} auc={r['auc']:.4f} f1={r['f1']:.4f}")
    return 0


def cmd_infer_l2(args) -> int:
    from .data_ingest import LabeledDataset
    from .ensemble import ENSEMBLE_NAME, ensemble_predict
    from .harness.l2 import infer_l2, l2_scores_for_handles
    from .metrics import write_csv

    cfg = config_from_args(args)
    e, d = args.cell
    catalog = DataCatalog.from_root(cfg.data_root)
    l2 = LabeledDataset(catalog.pool("L2"), "L2", "L2", catalog, role="test")
    handles = {m: _load_handle(cfg, e, d, m) for m in cfg.models}
    scores = l2_scores_for_handles(handles, l2, cfg.train.batch_size)
    members = {m: s for m, s in scores.items() if m not in cfg.ensemble_exclude}
    if members:
        scores[ENSEMBLE_NAME] = ensemble_predict(members)
    results = infer_l2(scores, args.threshold)
    rows = [dict(experiment=f"{e}{d}", **r.row()) for r in results]
    out = Path(cfg.output_dir) / f"l2_{e}{d}.csv"
    write_csv(out, rows, ("experiment", "model", "detections", "pool_size", "recall_pct"))
    for r in results:
        print(f"{e}{d} {r.model:<12} {r.detections:>4}/{r.pool_size}  {r.recall_pct:6.2f}%")
    return 0


def cmd_complexity(args) -> int:
    from .harness.reports import complexity_report, write_complexity
    from .metrics import read_metrics

    models = args.models or MODEL_NAMES
    variant = args.variant or "full"
    side = args.image_side or (224 if variant == "full" else 32)
    metrics = read_metrics(args.metrics) if args.metrics else []
    rows = complexity_report(models, side, variant, metrics, args.experiment)
    for r in rows:
        print(f"{r['model']:<12} params={r['params'] / 1e6:8.2f}M  MACs={r['macs'] / 1e9:7.2f}G  "
              f"2xMACs={r['flops_2x_macs'] / 1e9:7.2f}G  mean_auc={r['mean_auc']:.4f}")
    if args.out:
        write_complexity(args.out, rows, side)
    if args.plot:
        from .harness.plotting import plot_complexity
        plot_complexity(rows, args.plot)
    return 0


def cmd_compare(args) -> int:
    from .harness.reports import compare_to_reference, render_comparison
    from .metrics import read_metrics

    rows = read_metrics(args.metrics) if args.metrics.exists() else []
    report = compare_to_reference(rows, model=args.model, flag_threshold=args.flag_threshold)
    text = render_comparison(report)
    print(text)
    if args.out:
        Path(args.out).write_text(text + "\n")
    return 0


def cmd_plot_roc(args) -> int:
    from .harness.plotting import plot_roc

    out = plot_roc(args.results_dir, args.test_set, args.experiment, args.out)
    print(out)
    return 0


def cmd_run_grid(args) -> int:
    from .harness.grid import run_grid

    cfg = config_from_args(args)
    result = run_grid(cfg)
    print(f"{len(result.metrics_rows)} metrics rows -> {result.metrics_path}")
    if result.failures:
        print(f"{len(result.failures)} failed cells, see {result.root / 'failures.csv'}", file=sys.stderr)
    print(json.dumps({"failures": len(result.failures)}))
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lensfind", description="Strong-lens classifier experiments")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate the manifest and print dataset counts")
    _common(p)
    p.set_defaults(func=cmd_ingest)

    for name, func, helptext in (("train", cmd_train, "train the models of one cell"),
                                 ("evaluate", cmd_evaluate, "score test sets with trained checkpoints"),
                                 ("ensemble", cmd_ensemble, "soft-vote the predictions of one cell"),
                                 ("infer-l2", cmd_infer_l2, "recall on the 138-lens L2 pool")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("cell", type=_cell_arg, help="experiment and depth, e.g. A2")
        _common(p)
        if name == "infer-l2":
            p.add_argument("--threshold", type=float, default=0.5)
        p.set_defaults(func=func)

    p = sub.add_parser("complexity", help="parameter and MAC counts")
    p.add_argument("--models", type=_csv_list(), help="comma list (default: all 11)")
    p.add_argument("--variant", choices=("full", "toy"))
    p.add_argument("--image-side", type=int)
    p.add_argument("--metrics", type=Path, help="metrics.csv for the mean AUC column")
    p.add_argument("--experiment", default="C3", help="cell whose mean AUC is reported")
    p.add_argument("--out", type=Path, help="write CSV here")
    p.add_argument("--plot", type=Path, help="write a params-vs-FLOPs figure here")
    p.set_defaults(func=cmd_complexity)

    p = sub.add_parser("compare", help="compare metrics.csv with published ensemble values")
    p.add_argument("metrics", type=Path)
    p.add_argument("--model", default="Ensemble")
    p.add_argument("--flag-threshold", type=float, default=0.05)
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("plot-roc", help="ROC curves of one cell on one test set")
    p.add_argument("results_dir", type=Path)
    p.add_argument("--test-set", required=True, choices=TEST_SET_IDS)
    p.add_argument("--experiment", required=True, help="cell label, e.g. C3")
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_plot_roc)

    p = sub.add_parser("run-grid", help="train, evaluate and ensemble every configured cell")
    _common(p)
    p.set_defaults(func=cmd_run_grid)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
