"""Reduced MNIST -> USPS run (digits 3 vs 6, 8-qubit model, 20 epochs).

Expects in DATA_DIR:
    train-images-idx3-ubyte[.gz], train-labels-idx1-ubyte[.gz]   (MNIST, IDX)
    usps.csv                                                     (label, 256 pixels in 0..255)

If only the LIBSVM-format ``usps.bz2`` is present (pixels in [-1, 1], labels 1..10),
pass --convert-usps to write usps.csv first.

    python3 scripts/run_mnist_usps.py DATA_DIR --out runs/mnist-usps
"""

import argparse
import bz2
import json
import sys
from pathlib import Path

from vqda.cli import main as vqda_main


def convert_usps(src: Path, dst: Path) -> int:
    rows = 0
    with bz2.open(src, "rt") as fin, open(dst, "w") as fout:
        for line in fin:
            parts = line.split()
            if not parts:
                continue
            label = int(float(parts[0])) - 1  # LIBSVM labels are 1..10 for digits 0..9
            pix = [0.0] * 256
            for tok in parts[1:]:
                k, v = tok.split(":")
                pix[int(k) - 1] = (float(v) + 1.0) * 127.5
            fout.write(",".join([str(label)] + [f"{p:.4f}" for p in pix]) + "\n")
            rows += 1
    return rows


def pick(root: Path, *names) -> str:
    for n in names:
        if (root / n).exists():
            return str(root / n)
    sys.exit(f"none of {names} found in {root}")


def build_config(root: Path, epochs: int, seed: int) -> dict:
    return {
        "name": "mnist-usps-reduced",
        "model": "mnist-usps-8q",
        "seed": seed,
        "train": {"epochs": epochs, "batch_size": 16, "learning_rate": 0.01},
        "data": {
            "kind": "digits",
            "digits": [3, 6],
            "target_size": 16,
            "source": {
                "format": "idx",
                "images": pick(root, "train-images-idx3-ubyte", "train-images-idx3-ubyte.gz"),
                "labels": pick(root, "train-labels-idx1-ubyte", "train-labels-idx1-ubyte.gz"),
            },
            "target": {"format": "csv", "path": pick(root, "usps.csv"), "width": 16, "height": 16},
            "source_split": [500, 200],
            "target_split": [200, 100],
        },
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("data_dir", type=Path)
    ap.add_argument("--out", default="runs/mnist-usps")
    ap.add_argument("--epochs", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--convert-usps", action="store_true")
    args = ap.parse_args()
    if args.convert_usps:
        n = convert_usps(args.data_dir / "usps.bz2", args.data_dir / "usps.csv")
        print(f"wrote {n} rows to {args.data_dir / 'usps.csv'}")
    cfg = build_config(args.data_dir.resolve(), args.epochs, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg_path = out / "run_config.json"
    cfg_path.write_text(json.dumps(cfg, indent=2))
    return vqda_main(["train", "--config", str(cfg_path), "--out", str(out), "--threads", str(args.threads)])


if __name__ == "__main__":
    sys.exit(main())
