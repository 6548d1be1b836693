"""Command line entry point: ``gnm <command> ...``.

Exit codes: 0 ok, 2 bad flags or config, 3 data ingestion failure, 4 training
aborted on non-finite losses, 5 checkpoint schema mismatch, 6 missing patch
classifier.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np
import torch

from . import scenegen
from .checkpoint import CheckpointSchemaMismatch, load_model
from .config import ConfigError, RunConfig, load_config
from .data import to_tensor
from .eval.classifier import ClassifierMissing, load_classifier
from .eval.report import evaluate, parse_metrics
from .objective import NonFiniteLoss
from .sampling import MODES, NeedsGNM, decompose, global_traverse, object_traverse, prior_samples, resample_zs
from .scenegen.types import DatasetKind
from .train import run_training
from .viz import save_montage

log = logging.getLogger("gnm")

EXIT_OK, EXIT_USAGE, EXIT_INGEST, EXIT_NONFINITE, EXIT_SCHEMA, EXIT_CLASSIFIER = 0, 2, 3, 4, 5, 6


class UsageError(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gnm", description="Scene generation with structured latents.")
    p.add_argument("--config", help="run configuration file (INI sections model/train/data/eval)")
    p.add_argument("--seed", type=int, help="overrides train.seed and eval.seed")
    p.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    p.add_argument("--print-config", action="store_true", help="print the effective configuration and exit")
    sub = p.add_subparsers(dest="command")

    g = sub.add_parser("gen-data", help="write a synthetic scene dataset")
    g.add_argument("--kind", required=True, help="mnist4 | mnist10 | mnist4_10 | arrow2d")
    g.add_argument("--count", type=int, required=True)
    g.add_argument("--seed", type=int, dest="sub_seed")
    g.add_argument("--out", required=True)
    g.add_argument("--mnist-images")
    g.add_argument("--mnist-labels")
    g.add_argument("--image-size", type=int, default=128)
    g.add_argument("--start", type=int, default=0, help="index of the first scene")

    t = sub.add_parser("train", help="train a model")
    t.add_argument("--config", dest="sub_config")
    t.add_argument("--out", required=True)
    t.add_argument("--resume", help="checkpoint to continue from")
    t.add_argument("--steps", type=int, help="override train.steps")
    t.add_argument("--data", help="override data.path")

    s = sub.add_parser("sample", help="write a grid of generated images")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--n", type=int, default=25)
    s.add_argument("--seed", type=int, dest="sub_seed")
    s.add_argument("--out", required=True, help="PNG path")
    s.add_argument("--mode", choices=MODES, default="struct")
    s.add_argument("--images", help="dataset directory supplying the input for object-traverse / posterior")
    s.add_argument("--index", type=int, default=0)
    s.add_argument("--cell", type=int)
    s.add_argument("--sweep", type=float, default=1.0)
    s.add_argument("--step", type=int, default=0, help="global step latent to traverse")
    s.add_argument("--dim", type=int, default=0)
    s.add_argument("--source", choices=["prior", "posterior"], default="prior")

    e = sub.add_parser("eval", help="compute metrics for a checkpoint")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--dataset", required=True)
    e.add_argument("--metrics", required=True, help="comma list of s_acc,d_steps,ll,ap,probe")
    e.add_argument("--out", required=True)
    e.add_argument("--classifier", help="patch classifier artifact (default: eval.classifier)")

    d = sub.add_parser("decompose", help="per-image component panels")
    d.add_argument("--checkpoint", required=True)
    d.add_argument("--images", required=True, help="dataset directory")
    d.add_argument("--out", required=True, help="output directory")
    d.add_argument("--n", type=int, default=8)
    return p


def _config(args) -> RunConfig:
    path = getattr(args, "sub_config", None) or args.config
    cfg = load_config(path) if path else load_config()
    if args.seed is not None:
        cfg.train.seed = cfg.eval.seed = args.seed
    return cfg.validate()


def _seed(args, default: int = 0) -> int:
    for v in (getattr(args, "sub_seed", None), args.seed):
        if v is not None:
            return v
    return default


def _dataset_tensors(root, image_size: int, limit: int | None = None):
    ds = scenegen.load_dataset(root)
    n = len(ds) if limit is None else min(limit, len(ds))
    return ds, to_tensor(ds.images(range(n)), image_size), [ds.spec(i) for i in range(n)]


def cmd_gen_data(args, cfg: RunConfig) -> int:
    kind = DatasetKind.parse(args.kind)
    if args.count < 1:
        raise UsageError("--count must be >= 1")
    bank = None
    if kind is not DatasetKind.ARROW2D:
        images = args.mnist_images or cfg.data.mnist_images
        labels = args.mnist_labels or cfg.data.mnist_labels
        if not images or not labels:
            raise UsageError(f"{kind.value} needs --mnist-images and --mnist-labels")
        bank = scenegen.load_mnist_idx(images, labels)
    seed = _seed(args)
    scenes = scenegen.generate(kind, args.count, seed, bank, args.image_size, start=args.start)
    scenegen.serialize_dataset(scenes, args.out, kind=kind.value, seed=seed)
    log.info("wrote %d %s scenes to %s", args.count, kind.value, args.out)
    return EXIT_OK


def cmd_train(args, cfg: RunConfig) -> int:
    if args.data:
        cfg.data.path = args.data
    if args.steps is not None:
        cfg.train.steps = args.steps
    cfg.validate()
    if not args.resume and not cfg.data.path:
        raise UsageError("data.path is not set (config [data] path or --data)")
    run_training(cfg, args.out, resume=args.resume, steps=cfg.train.steps)
    return EXIT_OK


def cmd_sample(args, cfg: RunConfig) -> int:
    model, run_cfg, _ = load_model(args.checkpoint)
    seed = _seed(args)
    x = None
    if args.images:
        _, x, _ = _dataset_tensors(args.images, run_cfg.model.image_size, args.index + 1)
        x = x[args.index:args.index + 1]
    if args.mode == "struct":
        images = prior_samples(model, args.n, seed)
    elif args.mode == "global-traverse":
        images = global_traverse(model, args.n, seed, args.step, args.dim)
    elif args.mode == "object-traverse":
        if x is None:
            raise UsageError("object-traverse needs --images")
        images = object_traverse(model, x, args.n, args.cell, args.sweep)
    else:
        if args.source == "posterior" and x is None:
            raise UsageError("--source posterior needs --images")
        images = resample_zs(model, args.n, seed, args.source, x)
    save_montage(args.out, images)
    return EXIT_OK


def cmd_eval(args, cfg: RunConfig) -> int:
    metrics = parse_metrics(args.metrics)
    model, run_cfg, _ = load_model(args.checkpoint)
    # the checkpoint's eval block applies unless a config file is given
    ecfg = cfg.eval if args.config else run_cfg.eval
    if args.seed is not None:
        ecfg.seed = args.seed
    ds = scenegen.load_dataset(args.dataset)
    kind = DatasetKind.parse(ds.kind)
    classifier = None
    if "s_acc" in metrics and kind is not DatasetKind.ARROW2D:
        classifier = load_classifier(args.classifier or ecfg.classifier)
    n = max(ecfg.n_eval, ecfg.gen_pool if "d_steps" in metrics else 0)
    _, x, specs = _dataset_tensors(args.dataset, run_cfg.model.image_size, n)
    report = evaluate(model, x[:ecfg.n_eval], specs[:ecfg.n_eval], kind, metrics, ecfg, classifier, args.out,
                      real_pool=x)
    log.info("eval: %s", {k: v for k, v in report.to_json().items() if k != "config"})
    return EXIT_OK


def cmd_decompose(args, cfg: RunConfig) -> int:
    model, run_cfg, _ = load_model(args.checkpoint)
    _, x, _ = _dataset_tensors(args.images, run_cfg.model.image_size, args.n)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i in range(len(x)):
        dec = decompose(model, x[i:i + 1])
        dec.panel.save(out / f"panel_{i:04d}.png")
        np.savetxt(out / f"boxes_{i:04d}.csv", dec.boxes.reshape(-1, 4), delimiter=",",
                   header="x0,y0,x1,y1", comments="")
    return EXIT_OK


COMMANDS = {"gen-data": cmd_gen_data, "train": cmd_train, "sample": cmd_sample, "eval": cmd_eval,
            "decompose": cmd_decompose}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=getattr(logging, args.log_level), format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        if args.print_config:
            sys.stdout.write(cfg.dumps())
            return EXIT_OK
        if args.command is None:
            parser.print_usage(sys.stderr)
            return EXIT_USAGE
        torch.manual_seed(cfg.train.seed)
        return COMMANDS[args.command](args, cfg)
    except NonFiniteLoss as exc:
        log.error("training aborted: %s", exc)
        return EXIT_NONFINITE
    except CheckpointSchemaMismatch as exc:
        log.error("%s", exc)
        return EXIT_SCHEMA
    except ClassifierMissing as exc:
        log.error("%s; train one with scripts/train_patch_classifier.py", exc)
        return EXIT_CLASSIFIER
    except (scenegen.idx.IdxError, scenegen.DatasetIOError, scenegen.SchemaVersionMismatch,
            FileNotFoundError) as exc:
        log.error("ingestion failed: %s", exc)
        return EXIT_INGEST
    except (UsageError, ConfigError, NeedsGNM, ValueError) as exc:
        parser.print_usage(sys.stderr)
        sys.stderr.write(f"gnm: error: {exc}\n")
        return EXIT_USAGE

if __name__ == "__main__":
    sys.exit(main())
