"""Scaled-down ordering check on 64x64 MNIST-4: GNM against ConvDRAW (4 steps).

Trains both models at the same batch size, then measures structure accuracy
on generated samples and discriminability steps against held-out scenes.
The summary lands in ``<out>/ordering.json``; the acceptance suite reads it.

    python scripts/ordering_repro.py --steps 100000 --out results
"""
import argparse
import json
import time
from pathlib import Path

from gnm import scenegen
from gnm.config import load_config
from gnm.data import ImageStore
from gnm.eval.classifier import load_classifier
from gnm.eval.report import evaluate
from gnm.train import run_training

MODELS = {"GNM_STRUCT": "mlp", "CONVDRAW": "conv"}


def ensure_dataset(path, count, seed, bank):
    path = Path(path)
    if not (path / "manifest.json").is_file():
        scenes = scenegen.gen_mnist4(bank, count, seed)
        scenegen.serialize_dataset(scenes, path, kind="MNIST4", seed=seed)
    return scenegen.load_dataset(path)


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--config", default="configs/mnist4_64.ini")
    ap.add_argument("--steps", type=int, default=100_000)
    ap.add_argument("--out", default="results")
    ap.add_argument("--digits", default="data/digits")
    ap.add_argument("--train-size", type=int, default=60_000)
    ap.add_argument("--test-size", type=int, default=2_048)
    ap.add_argument("--classifier", default="artifacts/patch_classifier.pt")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    out = Path(args.out)
    d = args.digits
    train_bank = scenegen.load_mnist_idx(f"{d}/train-images-idx3-ubyte", f"{d}/train-labels-idx1-ubyte", "train")
    test_bank = scenegen.load_mnist_idx(f"{d}/t10k-images-idx3-ubyte", f"{d}/t10k-labels-idx1-ubyte", "test")
    train_ds = ensure_dataset(out / "data" / "mnist4_train", args.train_size, args.seed, train_bank)
    test_ds = ensure_dataset(out / "data" / "mnist4_test", args.test_size, args.seed + 1, test_bank)
    classifier = load_classifier(args.classifier)

    summary = {"steps": args.steps, "models": {}}
    store = None
    for kind, interaction in MODELS.items():
        cfg = load_config(args.config)
        cfg.model.kind, cfg.model.interaction = kind, interaction
        cfg.train.seed = cfg.eval.seed = args.seed
        cfg.data.path = str(out / "data" / "mnist4_train")
        if store is None:
            store = ImageStore(train_ds, cfg.model.image_size, limit=args.train_size)
        summary["batch"] = cfg.train.batch
        t0 = time.time()
        state = run_training(cfg, out / kind, store=store, steps=args.steps)
        real = ImageStore(test_ds, cfg.model.image_size).get(range(len(test_ds)))
        specs = [test_ds.spec(i) for i in range(min(cfg.eval.n_eval, len(test_ds)))]
        report = evaluate(state.model, real[:len(specs)], specs, "MNIST4", ["s_acc", "d_steps"], cfg.eval,
                          classifier, out / kind / "eval", real_pool=real)
        summary["models"][kind] = {"s_acc": report.s_acc, "d_steps": report.d_steps, "steps": state.step,
                                   "train_seconds": time.time() - t0}
        print(kind, summary["models"][kind])
    g, c = summary["models"]["GNM_STRUCT"], summary["models"]["CONVDRAW"]
    summary["checks"] = {"s_acc_gnm_ge_0.6": g["s_acc"] >= 0.6,
                         "s_acc_gap_ge_0.2": g["s_acc"] - c["s_acc"] >= 0.2,
                         "d_steps_gnm_gt_convdraw": g["d_steps"] > c["d_steps"]}
    out.mkdir(parents=True, exist_ok=True)
    (out / "ordering.json").write_text(json.dumps(summary, indent=2))
    print(json.dumps(summary["checks"]))


if __name__ == "__main__":
    main()
