"""Write MNIST-format IDX files built from the scikit-learn digits.

Use this when the real MNIST files are not available; point ``gen-data``'s
``--mnist-images/--mnist-labels`` at the output.
"""
import argparse
from pathlib import Path

from gnm.scenegen.digits import fallback_digit_banks
from gnm.scenegen.idx import write_idx_images, write_idx_labels


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="data/digits")
    ap.add_argument("--copies", type=int, default=8, help="jittered copies per source digit")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (tr, ytr), (te, yte) = fallback_digit_banks(args.copies, args.seed)
    for name, (x, y) in {"train": (tr, ytr), "t10k": (te, yte)}.items():
        write_idx_images(out / f"{name}-images-idx3-ubyte", x)
        write_idx_labels(out / f"{name}-labels-idx1-ubyte", y)
        print(f"{name}: {len(y)} digits")


if __name__ == "__main__":
    main()
