"""Command-line entry point.

Exit codes: 0 success, 1 check failure, 2 usage or config error.

A run config is JSON with keys ``model`` (bundled name, path or inline dict),
``train`` (TrainConfig fields), ``data`` and optionally ``seed``. ``data`` is
either ``{"kind": "synthetic", "spec": {...}}`` or a two-file digit task::

    {"kind": "digits", "digits": [3, 6], "target_size": 16,
     "source": {"format": "idx", "images": ..., "labels": ...},
     "target": {"format": "csv", "path": ..., "width": 16, "height": 16},
     "source_split": [500, 200], "target_split": [200, 100]}
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from importlib import resources
from pathlib import Path

import numpy as np

from . import data as vdata
from .ansatz import build_model, describe, load_model_config
from .circuit import make_rng
from .encoder import AmplitudeTarget, train_encoder
from .grad import SHIFT, three_way_check
from .training import TrainConfig, evaluate, train

BUNDLED_RUNS = ("synthetic-4q-run",)


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# run configs
# ---------------------------------------------------------------------------


def _read_json(ref: str) -> dict:
    if ref in BUNDLED_RUNS:
        return json.loads(resources.files("vqda.configs").joinpath(f"{ref}.json").read_text())
    try:
        return json.loads(Path(ref).read_text())
    except FileNotFoundError:
        raise UsageError(f"config not found: {ref}") from None
    except json.JSONDecodeError as e:
        raise UsageError(f"{ref}: invalid JSON ({e})") from None


def resolve_run_config(raw: dict, seed: int | None = None, lambda_override: float | None = None, threads: int | None = None) -> dict:
    """Fully resolved config: model inlined, train defaults filled, flag overrides applied."""
    unknown = set(raw) - {"name", "model", "train", "data", "seed"}
    if unknown:
        raise UsageError(f"unknown run config keys: {sorted(unknown)}")
    if "model" not in raw or "data" not in raw:
        raise UsageError("run config needs 'model' and 'data'")
    model = load_model_config(raw["model"]).to_dict()
    train_d = dict(raw.get("train", {}))
    if seed is None:
        seed = raw.get("seed", train_d.get("seed", 0))
    train_d["seed"] = seed
    if lambda_override is not None:
        train_d["lambda_override"] = lambda_override
    if threads is not None:
        train_d["threads"] = threads
    tc = TrainConfig.from_dict(train_d).to_dict()
    data = dict(raw["data"])
    if data.get("kind") == "synthetic":
        spec = vdata.SyntheticDomainSpec(**{**data.get("spec", {}), "n_qubits": model["n_qubits"]})
        data["spec"] = {**vars(spec), "seed": data.get("spec", {}).get("seed", seed)}
    elif data.get("kind") != "digits":
        raise UsageError(f"unknown data kind {data.get('kind')!r}")
    return {"name": raw.get("name", "run"), "model": model, "train": tc, "data": data, "seed": seed}


def run_identity(resolved: dict) -> dict:
    # threads never changes results, so it stays out of hashed and echoed configs
    ident = json.loads(json.dumps(resolved))
    ident["train"].pop("threads", None)
    return ident


def config_hash(resolved: dict) -> str:
    blob = json.dumps(run_identity(resolved), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _load_images(entry: dict) -> vdata.RawImageSet:
    fmt = entry.get("format")
    if fmt == "idx":
        return vdata.load_idx(entry["images"], entry["labels"])
    if fmt == "csv":
        return vdata.load_csv(entry["path"], entry["width"], entry["height"], entry.get("channels", 1))
    raise UsageError(f"unknown image format {fmt!r}")


def load_datasets(resolved: dict) -> dict[str, vdata.DomainDataset]:
    """Labeled splits ``source``, ``target``, ``target_test`` and possibly ``source_test``."""
    d = resolved["data"]
    n = resolved["model"]["n_qubits"]
    if d["kind"] == "synthetic":
        return vdata.gen_synthetic(vdata.SyntheticDomainSpec(**d["spec"]))
    a, b = d["digits"]
    size = d.get("target_size", 16)
    out = {}
    for dom in ("source", "target"):
        entry = d[dom]
        ds = vdata.make_binary_task(_load_images(entry), a, b, dom, size, entry.get("channels", 1), n)
        n_train, n_test = d[f"{dom}_split"]
        tr, te = vdata.split(ds, n_train, n_test, seed=resolved["seed"])
        out[dom], out[f"{dom}_test"] = tr, te
    return out


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def _dump(obj, path: Path | None = None) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        path.write_text(text)


def cmd_describe(args) -> int:
    ref = args.config
    if ref.endswith(".json") and Path(ref).exists() and "model" in json.loads(Path(ref).read_text()):
        ref = json.loads(Path(ref).read_text())["model"]
    try:
        model = build_model(ref)
    except FileNotFoundError:
        raise UsageError(f"config not found: {args.config}") from None
    info = describe(model)
    if args.json:
        _dump(info)
        return 0
    print(f"{info['name']}: {info['n_qubits']} qubits, active after pooling {info['active_qubits']}")
    print(f"{'block':<10}{'rotations':>10}{'cnots':>8}{'params':>8}")
    for name, b in info["blocks"].items():
        print(f"{name:<10}{b['rotations']:>10}{b['cnots']:>8}{b['n_params']:>8}")
    print(f"theta_cp {info['theta_cp']}  theta_qfc1 {info['theta_qfc1']}  theta_qfc2 {info['theta_qfc2']}")
    print(f"total {info['total_params']}")
    return 0


def cmd_gradcheck(args) -> int:
    suite = {"n_models": 100, "max_qubits": 6, "max_params": 60, "step": 1e-4}
    if args.config:
        suite.update(_read_json(args.config))
    if args.models is not None:
        suite["n_models"] = args.models
    if suite["n_models"] < 1:
        raise UsageError("empty gradient suite")
    res = three_way_check(
        suite["n_models"], args.seed, suite["max_qubits"], suite["max_params"], suite["step"],
        shift=args.shift,
    )
    _dump(res)
    return 0 if res["passed"] else 1


def cmd_encode_train(args) -> int:
    dim = 2**args.n_qubits
    if args.basis is not None:
        if not 0 <= args.basis < dim:
            raise UsageError(f"basis index out of range for {args.n_qubits} qubits")
        x = np.zeros(dim)
        x[args.basis] = 1.0
    else:
        x = make_rng([args.seed, 7]).uniform(0.0, 1.0, size=dim)
    res = train_encoder(AmplitudeTarget(x), args.layers, args.lr, args.steps, args.seed)
    out = {
        "n_qubits": args.n_qubits,
        "fidelity": res.fidelity,
        "final_objective": res.final_objective,
        "converged": res.converged,
    }
    _dump(out)
    if args.min_fidelity is not None and res.fidelity < args.min_fidelity:
        return 1
    return 0


def cmd_synth(args) -> int:
    resolved = resolve_run_config(_read_json(args.config), args.seed)
    if resolved["data"]["kind"] != "synthetic":
        raise UsageError("synth needs a synthetic data spec")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    spec = vdata.SyntheticDomainSpec(**resolved["data"]["spec"])
    h, w = vdata.image_shape(spec.n_qubits)
    manifest = {"spec": resolved["data"]["spec"], "width": w, "height": h, "files": {}}
    for name, raw in vdata.gen_synthetic_images(spec).items():
        if len(raw) == 0:
            continue
        vdata.write_csv(out / f"{name}.csv", raw.images, raw.labels)
        manifest["files"][name] = f"{name}.csv"
    _dump(manifest, out / "manifest.json")
    return 0


def _train_report_files(out: Path, resolved: dict, chash: str, report, metrics: dict) -> None:
    with open(out / "epochs.jsonl", "w") as fh:
        for rec in report.epochs:
            fh.write(json.dumps({"config_hash": chash, **rec}, sort_keys=True) + "\n")
    summary = {
        "config_hash": chash,
        "config": run_identity(resolved),
        "lambda_override": resolved["train"]["lambda_override"],
        "notes": report.notes,
        "final_epoch": report.epochs[-1],
        "metrics": metrics,
    }
    _dump(summary, out / "summary.json")
    _dump({"config_hash": chash, "params": report.final_params}, out / "params.json")


def cmd_train(args) -> int:
    resolved = resolve_run_config(_read_json(args.config), args.seed, args.lambda_override, args.threads)
    chash = config_hash(resolved)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    sets = load_datasets(resolved)
    model = build_model(resolved["model"])
    cfg = TrainConfig.from_dict(resolved["train"])
    evals = {"source": sets["source"], "target": sets["target"]}
    t0 = time.perf_counter()
    report = train(sets["source"], sets["target"].unlabeled(), model, cfg, eval_sets=evals)
    params = np.array(report.final_params)
    metrics = {name: evaluate(ds, model, params) for name, ds in sets.items()}
    _train_report_files(out, resolved, chash, report, metrics)
    timing = {"config_hash": chash, "threads": cfg.threads, "wall_clock_s": time.perf_counter() - t0}
    _dump(timing, out / "timing.json")
    if not args.quiet:
        print(f"target_test accuracy {metrics['target_test']['accuracy']:.4f}  ({out})")
    return 0


def cmd_eval(args) -> int:
    resolved = resolve_run_config(_read_json(args.config), args.seed)
    p = json.loads(Path(args.params).read_text())
    params = np.asarray(p["params"] if isinstance(p, dict) else p, dtype=float)
    model = build_model(resolved["model"])
    if params.shape != (model.n_params,):
        raise UsageError(f"expected {model.n_params} parameters, got {params.shape}")
    sets = load_datasets(resolved)
    if args.split not in sets:
        raise UsageError(f"split {args.split!r} not available; have {sorted(sets)}")
    ds = sets[args.split]
    if len(ds) == 0:
        raise UsageError("empty dataset")
    res = evaluate(ds, model, params, shots=args.shots, seed=resolved["seed"])
    res.update(config_hash=config_hash(resolved), split=args.split, shots=args.shots)
    _dump(res, Path(args.out) if args.out else None)
    return 0


def cmd_report(args) -> int:
    out = Path(args.out)
    try:
        summary = json.loads((out / "summary.json").read_text())
        epochs = [json.loads(line) for line in (out / "epochs.jsonl").read_text().splitlines()]
    except FileNotFoundError as e:
        raise UsageError(f"missing run output: {e.filename}") from None
    cols = ["epoch"] + [k for k in epochs[0] if k not in ("epoch", "config_hash")]
    print(",".join(cols))
    for rec in epochs:
        print(",".join("" if rec[c] is None else f"{rec[c]:.6g}" if isinstance(rec[c], float) else str(rec[c]) for c in cols))
    for name, m in summary["metrics"].items():
        print(f"# {name}: accuracy {m['accuracy']:.4f} (n={m['n']})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="vqda", description="Variational quantum domain adaptation toolkit")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("describe", help="per-block gate and parameter counts")
    p.add_argument("--config", required=True, help="bundled model name, model JSON or run JSON")
    p.add_argument("--json", action="store_true")
    p.set_defaults(fn=cmd_describe)

    p = sub.add_parser("gradcheck", help="parameter-shift vs adjoint vs finite differences")
    p.add_argument("--config", help="JSON with n_models, max_qubits, max_params, step")
    p.add_argument("--models", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--shift", type=float, default=SHIFT, help="shift angle (fault injection)")
    p.set_defaults(fn=cmd_gradcheck)

    p = sub.add_parser("encode-train", help="train the amplitude-encoding circuit on one target")
    p.add_argument("--n-qubits", type=int, default=4)
    p.add_argument("--basis", type=int, help="basis-state target; random positive vector if omitted")
    p.add_argument("--layers", type=int, default=4)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--steps", type=int, default=300)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--min-fidelity", type=float)
    p.set_defaults(fn=cmd_encode_train)

    p = sub.add_parser("synth", help="write the synthetic two-domain task as CSV")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("train", help="adversarial training run")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--lambda-override", type=float)
    p.add_argument("--out", required=True)
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="score saved parameters on one split")
    p.add_argument("--config", required=True)
    p.add_argument("--params", required=True)
    p.add_argument("--split", default="target_test")
    p.add_argument("--seed", type=int)
    p.add_argument("--shots", type=int, help="emulate finite shots")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("report", help="CSV view of a finished run")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_report)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.fn(args)
    except (UsageError, ValueError, KeyError, TypeError, OSError) as e:
        print(f"vqda {args.cmd}: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
