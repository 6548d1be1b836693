"""Train and freeze the digit patch classifier used by structure accuracy."""
import argparse
import logging
import sys

from gnm.eval.classifier import save_classifier, train_patch_classifier
from gnm.scenegen.idx import load_mnist_idx


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--digits", default="data/digits", help="directory with train/t10k IDX files")
    ap.add_argument("--out", default="artifacts/patch_classifier.pt")
    ap.add_argument("--epochs", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--min-accuracy", type=float, default=0.99)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO)
    d = args.digits
    train = load_mnist_idx(f"{d}/train-images-idx3-ubyte", f"{d}/train-labels-idx1-ubyte", "train")
    test = load_mnist_idx(f"{d}/t10k-images-idx3-ubyte", f"{d}/t10k-labels-idx1-ubyte", "test")
    model, acc = train_patch_classifier(train.images, train.labels, test.images, test.labels, args.epochs, args.seed)
    print(f"test accuracy {acc:.4f}")
    if acc < args.min_accuracy:
        print(f"below the required {args.min_accuracy}; not saved", file=sys.stderr)
        sys.exit(1)
    save_classifier(args.out, model, acc)


if __name__ == "__main__":
    main()
