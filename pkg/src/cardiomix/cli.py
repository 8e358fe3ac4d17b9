"""Command-line front end: ``cardiomix {gen,augment,train,eval,explain}``.

Settings resolve as defaults <- ``--config`` file <- flags; every command
writes the result to ``<out>/config.resolved``.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .augment import MixParams, augment_batch, dump_mixed
from .config import RunConfig, load_config
from .errors import CardiomixError, UsageError
from .evaluate import run_cv
from .explain import (
    gradcam, occlusion_map, pointing_game, render_heatmap, saliency_grad, write_attribution_csv,
)
from .imgcore import (
    Dataset, Example, attach_lesion_boxes, generate_synthetic, load_lesion_boxes, load_manifest,
    load_pgm, save_dataset,
)
from .model import load_checkpoint, save_checkpoint, train, write_loss_history
from .preprocess import PreprocessConfig, preprocess, preprocess_dataset

log = logging.getLogger("cardiomix")

# (flag, config key, subcommands)
FLAGS = [
    ("--per-class", "gen.per_class", {"gen"}),
    ("--height", "gen.height", {"gen"}),
    ("--width", "gen.width", {"gen"}),
    ("--radius-min", "gen.radius_min", {"gen"}),
    ("--radius-max", "gen.radius_max", {"gen"}),
    ("--contrast", "gen.contrast", {"gen"}),
    ("--noise", "gen.noise", {"gen"}),
    ("--sigma", "preprocess.sigma", {"augment", "train", "eval", "explain"}),
    ("--size", None, {"augment", "train", "eval"}),
    ("--method", "augment.method", {"augment", "train", "eval"}),
    ("--alpha", "augment.alpha", {"augment", "train", "eval"}),
    ("--fraction", "augment.fraction", {"train", "eval"}),
    ("--count", "augment.count", {"augment"}),
    ("--arch", "model.arch", {"train", "eval"}),
    ("--epochs", "train.epochs", {"train", "eval"}),
    ("--batch-size", "train.batch_size", {"train", "eval"}),
    ("--lr", "train.lr", {"train", "eval"}),
    ("--folds", "eval.folds", {"eval"}),
    ("--attribution", "explain.method", {"explain"}),
    ("--window", "explain.window", {"explain"}),
    ("--stride", "explain.stride", {"explain"}),
    ("--baseline", "explain.baseline", {"explain"}),
    ("--target", "explain.target", {"explain"}),
    ("--target-class", "explain.target_class", {"explain"}),
    ("--limit", "explain.limit", {"explain"}),
    ("--only-class", "explain.only_class", {"explain"}),
]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value settings file")
    common.add_argument("--seed", dest="run.seed", help="global seed")
    common.add_argument(
        "--threads", dest="run.threads",
        help="worker threads (default: $CARDIOMIX_THREADS or all cores; 1 = serial)",
    )
    common.add_argument("--out", required=True, help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="cardiomix", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    helps = {
        "gen": "generate a synthetic lesion dataset",
        "augment": "dump CutMix/MixUp samples",
        "train": "fit a classifier and write a checkpoint",
        "eval": "stratified k-fold cross-validation report",
        "explain": "attribution heatmaps for a trained model",
    }
    subs = {name: sub.add_parser(name, parents=[common], help=h) for name, h in helps.items()}
    for name in ("augment", "train", "eval", "explain"):
        subs[name].add_argument("--data", help="dataset directory or manifest.csv")
    subs["explain"].add_argument("--model", required=True, help="checkpoint written by train")
    subs["explain"].add_argument("images", nargs="*", help="PGM images (instead of --data)")
    for flag, key, commands in FLAGS:
        for name in commands:
            if key is None:
                subs[name].add_argument(flag, help="preprocessed side length (square)")
            else:
                subs[name].add_argument(flag, dest=key, help=key)
    return parser


def resolve_config(ns) -> RunConfig:
    cfg = load_config(ns.config) if ns.config else RunConfig()
    for key, value in vars(ns).items():
        if "." in key and value is not None:
            cfg.set(key, value)
    if getattr(ns, "size", None) is not None:
        cfg.set("preprocess.height", ns.size)
        cfg.set("preprocess.width", ns.size)
    cfg.run.threads = cfg.threads()
    cfg.validate()
    return cfg


def load_data(path, cfg: RunConfig) -> Dataset:
    """Dataset from a directory (``manifest.csv`` + optional ``lesions.csv``), preprocessed."""
    if path is None:
        raise UsageError("--data is required")
    path = Path(path)
    manifest = path / "manifest.csv" if path.is_dir() else path
    ds = load_manifest(manifest)
    lesions = manifest.parent / "lesions.csv"
    if lesions.exists():
        ds = attach_lesion_boxes(ds, load_lesion_boxes(lesions))
    return preprocess_dataset(ds, cfg.preprocess_config())


# ---- subcommands


def cmd_gen(cfg, ns, out):
    ds = generate_synthetic(cfg.synthetic_spec())
    save_dataset(ds, out)
    log.info("wrote %d images to %s", len(ds), out)


def cmd_augment(cfg, ns, out):
    ds = load_data(ns.data, cfg)
    method = cfg.augment.method
    if method == "none":
        raise UsageError("augment needs --method cutmix or mixup")
    mixed = augment_batch(ds, MixParams(method, cfg.augment.alpha, cfg.stage_seed("augment")),
                          cfg.augment.count)
    dump_mixed(mixed, out)
    log.info("wrote %d mixed samples to %s", len(mixed), out)


def cmd_train(cfg, ns, out):
    ds = load_data(ns.data, cfg)
    spec = cfg.model_spec(ds.image_shape[2], ds.num_classes)
    params, history = train(ds, spec, cfg.train_config("train"))
    save_checkpoint(params, out / "model.cmix")
    write_loss_history(history, out / "loss.csv")
    if history:
        log.info("final mean loss %.4f", history[-1])


def cmd_eval(cfg, ns, out):
    ds = load_data(ns.data, cfg)
    spec = cfg.model_spec(ds.image_shape[2], ds.num_classes)
    name = spec.arch if cfg.augment.method == "none" else f"{spec.arch}+{cfg.augment.method}"
    report = run_cv(ds, spec, cfg.train_config("eval"), k=cfg.eval.folds,
                    threads=cfg.run.threads, name=name)
    table = report.render_table()
    (out / "report.txt").write_text(table)
    (out / "folds.csv").write_text(report.to_csv())
    (out / "roc.csv").write_text(report.roc_csv())
    lines = ["id,score,predicted,true"] + [
        f"{p.id},{p.score!r},{p.predicted},{p.true}" for p in report.predictions
    ]
    (out / "predictions.csv").write_text("\n".join(lines) + "\n")
    print(table, end="")


def _explain_inputs(cfg, ns, spec):
    pcfg = PreprocessConfig(cfg.preprocess.sigma, cfg.preprocess.radius, spec.height, spec.width)
    if ns.images:
        return [
            Example(Path(p).stem, preprocess(load_pgm(p), pcfg), _unlabeled(spec.num_classes))
            for p in ns.images
        ]
    cfg.preprocess.height, cfg.preprocess.width = spec.height, spec.width
    ds = load_data(ns.data, cfg)
    examples = list(ds.examples)
    if cfg.explain.only_class >= 0:
        examples = [ex for ex in examples if ex.class_index == cfg.explain.only_class]
    if cfg.explain.limit:
        examples = examples[: cfg.explain.limit]
    return examples


def _unlabeled(k):
    return np.full(k, 1.0 / k)


def attribution(params, image, cfg: RunConfig):
    method = cfg.explain.method
    if method == "occlusion":
        return occlusion_map(params, image, cfg.occlusion_config(), threads=cfg.run.threads)
    if method == "saliency":
        return saliency_grad(params, image, cfg.explain.target_class)
    return gradcam(params, image, cfg.explain.target_class)


def cmd_explain(cfg, ns, out):
    if not ns.images and ns.data is None:
        raise UsageError("explain needs --data or image paths")
    params = load_checkpoint(ns.model)
    examples = _explain_inputs(cfg, ns, params.spec)
    (out / "heatmaps").mkdir(parents=True, exist_ok=True)
    (out / "attributions").mkdir(parents=True, exist_ok=True)
    pointing = ["id,hit,x0,y0,x1,y1"]
    hits = total = 0
    for ex in examples:
        attr = attribution(params, ex.image, cfg)
        render_heatmap(attr, ex.image, out / "heatmaps" / f"{ex.id}.ppm")
        write_attribution_csv(attr, out / "attributions" / f"{ex.id}.csv")
        if ex.lesion_box is not None:
            hit = pointing_game(attr, ex.lesion_box)
            hits, total = hits + hit, total + 1
            pointing.append(f"{ex.id},{int(hit)}," + ",".join(str(v) for v in ex.lesion_box))
    if total:
        (out / "pointing.csv").write_text("\n".join(pointing) + "\n")
        print(f"pointing game: {hits}/{total} = {hits / total:.4f}")
    log.info("wrote %d heatmaps to %s", len(examples), out / "heatmaps")


COMMANDS = {
    "gen": cmd_gen,
    "augment": cmd_augment,
    "train": cmd_train,
    "eval": cmd_eval,
    "explain": cmd_explain,
}


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    if not argv:
        parser.print_usage(sys.stderr)
        return 2
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if ns.command is None:
        parser.print_usage(sys.stderr)
        return 2
    logging.basicConfig(
        level=logging.DEBUG if ns.verbose else logging.INFO,
        format="%(levelname)s %(message)s",
        stream=sys.stderr,
    )
    try:
        cfg = resolve_config(ns)
        out = Path(ns.out)
        out.mkdir(parents=True, exist_ok=True)
        cfg.write(out)
        COMMANDS[ns.command](cfg, ns, out)
    except CardiomixError as exc:
        print(f"cardiomix {ns.command}: error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"cardiomix {ns.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
