"""Adaptation gain on the synthetic two-domain task: reversal active vs lambda fixed at 0.

Each grid point trains both arms over the given seeds and prints one JSON line
with mean target-test accuracies. Unset shift flags keep the generator defaults.

    python scripts/calibrate_da.py --seeds 5 --out scripts/results/da_calibration.jsonl
    python scripts/calibrate_da.py --marker 0 255 --blur 0 0.8 --seeds 3
"""

import argparse
import dataclasses
import itertools
import json
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from vqda.ansatz import build_model
from vqda.data import SyntheticDomainSpec, gen_synthetic
from vqda.training import TrainConfig, evaluate, train

SHIFT_FIELDS = ("brightness", "blur", "contrast", "marker", "level", "noise", "templates")


def run_arm(spec, model_ref, lr, seed, lam, epochs, batch):
    model = build_model(model_ref)
    d = gen_synthetic(spec)
    cfg = TrainConfig(epochs=epochs, batch_size=batch, learning_rate=lr, seed=seed, lambda_override=lam)
    r = train(d["source"], d["target"].unlabeled(), model, cfg)
    return evaluate(d["target_test"], model, np.array(r.final_params))["accuracy"]


def main():
    ap = argparse.ArgumentParser()
    defaults = SyntheticDomainSpec()
    for name in SHIFT_FIELDS:
        kind = str if name == "templates" else float
        ap.add_argument(f"--{name}", type=kind, nargs="+", default=[getattr(defaults, name)])
    ap.add_argument("--lr", type=float, nargs="+", default=[0.01])
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--epochs", type=int, default=30)
    ap.add_argument("--batch", type=int, default=16)
    ap.add_argument("--model", default="toy-4q")
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out", help="also append rows to this JSONL file")
    args = ap.parse_args()

    grid = list(itertools.product(*(getattr(args, n) for n in SHIFT_FIELDS), args.lr))
    tasks = []
    for point in grid:
        shift = dict(zip(SHIFT_FIELDS, point[:-1]))
        for s in range(args.seeds):
            spec = dataclasses.replace(defaults, seed=s, **shift)
            for lam in (None, 0.0):
                tasks.append((spec, args.model, point[-1], s, lam, args.epochs, args.batch))
    t0 = time.perf_counter()
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as ex:
            accs = list(ex.map(run_arm, *zip(*tasks)))
    else:
        accs = [run_arm(*t) for t in tasks]
    elapsed = time.perf_counter() - t0

    per_point = 2 * args.seeds
    for i, point in enumerate(grid):
        chunk = accs[i * per_point : (i + 1) * per_point]
        on, off = chunk[0::2], chunk[1::2]
        row = dict(zip(SHIFT_FIELDS, point[:-1]), lr=point[-1], seeds=args.seeds, epochs=args.epochs,
                   batch=args.batch, grl=float(np.mean(on)), ablation=float(np.mean(off)),
                   gain=float(np.mean(on) - np.mean(off)), grl_runs=on, ablation_runs=off)
        line = json.dumps(row)
        print(line, flush=True)
        if args.out:
            with open(args.out, "a") as fh:
                fh.write(line + "\n")
    print(f"# {len(tasks)} runs in {elapsed:.1f}s")


if __name__ == "__main__":
    main()
