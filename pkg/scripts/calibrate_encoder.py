"""Encoder fidelity across learning rates and step budgets on 4 qubits.

For each (lr, steps) prints the median fidelity over random positive targets
and the minimum over all 16 basis-state targets.

    python scripts/calibrate_encoder.py --lr 0.01 0.05 --steps 200 300
"""

import argparse
import itertools
import json

import numpy as np

from vqda.circuit import make_rng
from vqda.encoder import train_encoder


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n-qubits", type=int, default=4)
    ap.add_argument("--layers", type=int, default=4)
    ap.add_argument("--lr", type=float, nargs="+", default=[0.01, 0.05])
    ap.add_argument("--steps", type=int, nargs="+", default=[200, 300])
    ap.add_argument("--targets", type=int, default=20)
    ap.add_argument("--out")
    args = ap.parse_args()
    dim = 2**args.n_qubits
    for lr, steps in itertools.product(args.lr, args.steps):
        rand = [
            train_encoder(make_rng([s, 7]).uniform(size=dim), args.layers, lr, steps, seed=s).fidelity
            for s in range(args.targets)
        ]
        basis = [train_encoder(np.eye(dim)[k], args.layers, lr, steps, seed=k).fidelity for k in range(dim)]
        row = dict(lr=lr, steps=steps, layers=args.layers, random_median=float(np.median(rand)),
                   random_min=float(np.min(rand)), basis_min=float(np.min(basis)))
        line = json.dumps(row)
        print(line, flush=True)
        if args.out:
            with open(args.out, "a") as fh:
                fh.write(line + "\n")


if __name__ == "__main__":
    main()
