"""Acceptance criteria, one test each; a PASS/FAIL/SKIP line per criterion is
printed in the terminal summary."""

import os
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES, random_state
from vqda import qstate
from vqda.ansatz import build_model, classify_binary, extractor_forward, head_forward
from vqda.circuit import as_batch, make_rng
from vqda.cli import _read_json, load_datasets, resolve_run_config
from vqda.encoder import train_encoder
from vqda.gates import (
    Universal1Q,
    compile_controlled_1q,
    controlled_matrix,
    count_gates,
    equivalence_up_to_phase,
    gates_unitary,
    universal_2q_gates,
)
from vqda.grad import grad_through_features, three_way_check
from vqda.training import TrainConfig, evaluate, lambda_schedule, train

# Frozen after calibration: the bundled task gave +38.5 points over 5 seeds
# (scripts/results/da_calibration.jsonl); the bar stays at the 5-point floor.
GAIN_THRESHOLD = 0.05
BUNDLED_RUN = "synthetic-4q-run"
DATA_ENV = "VQDA_DATA_DIR"


def check(n, name, ok, detail):
    ACCEPTANCE_LINES[n] = f"[{'PASS' if ok else 'FAIL'}] {n:>2}. {name}: {detail}"
    print(ACCEPTANCE_LINES[n])
    assert ok, detail


def test_01_gate_algebra():
    rng = make_rng(1)
    t0 = time.perf_counter()
    worst = 0.0
    counts = count_gates(universal_2q_gates(0, 1, range(15)))
    for _ in range(1000):
        u = gates_unitary(universal_2q_gates(0, 1, range(15)), 2, rng.uniform(0, 2 * np.pi, 15))
        worst = max(worst, np.max(np.abs(u.conj().T @ u - np.eye(4))))
    dt = time.perf_counter() - t0
    ok = counts["rotations"] == 15 and counts["cnots"] == 3 and worst <= 1e-10 and dt < 5
    check(1, "two-qubit block", ok,
          f"{counts['rotations']} rotations + {counts['cnots']} CNOTs, max |U^dag U - I| {worst:.1e}, {dt:.2f}s")


def test_02_controlled_pooler():
    rng = make_rng(2)
    worst_block = 0.0
    for i in range(500):
        v = Universal1Q(*rng.uniform(0, 2 * np.pi, 3))
        cs = i % 2
        got = gates_unitary(compile_controlled_1q(v, 0, 1, cs), 2)
        _, dev = equivalence_up_to_phase(got, controlled_matrix(v.matrix(), cs))
        worst_block = max(worst_block, dev)
    worst_dm = 0.0
    n = 4
    for _ in range(100):
        psi = random_state(rng, n)
        v = Universal1Q(*rng.uniform(0, 2 * np.pi, 3))
        c, t = (int(x) for x in rng.choice(n, size=2, replace=False))
        cs = int(rng.integers(2))
        joint = np.zeros(2**n)
        for outcome in (0, 1):
            proj = qstate.full_operator(np.diag([1 - outcome, outcome]).astype(complex), [c], n)
            branch = proj @ psi
            if outcome == cs:
                branch = qstate.full_operator(v.matrix(), [t], n) @ branch
            joint += np.abs(branch) ** 2
        coherent = gates_unitary(compile_controlled_1q(v, c, t, cs), n) @ psi
        worst_dm = max(worst_dm, np.max(np.abs(joint - np.abs(coherent) ** 2)))
    ok = worst_block <= 1e-9 and worst_dm <= 1e-10
    check(2, "controlled pooler", ok,
          f"block deviation {worst_block:.1e} (500 V), deferred measurement {worst_dm:.1e} (100 instances)")


def _pipeline_fd_error(rng):
    m = build_model("toy-4q")
    worst = 0.0
    for head in ("QFC1", "QFC2"):
        params = rng.uniform(0, 2 * np.pi, m.n_params)
        psi = as_batch(np.stack([random_state(rng, 4) for _ in range(2)]), 4)
        w = rng.normal(size=(2, 2))
        g = grad_through_features(m, params, psi, head, w)
        got = np.zeros(m.n_params)
        got[: m.extractor.n_params] = g["cp"]
        got[m.head_slice(head)] = g["head"]

        def loss(p):
            cp, p1, p2 = m.split(p)
            _, f = extractor_forward(m, cp, psi)
            return float(np.sum(head_forward(m.head(head), p1 if head == "QFC1" else p2, f) * w))

        h = 1e-5
        for s in range(m.n_params):
            up, dn = params.copy(), params.copy()
            up[s] += h
            dn[s] -= h
            worst = max(worst, abs(got[s] - (loss(up) - loss(dn)) / (2 * h)))
    return worst


def test_03_gradient_oracle():
    res = three_way_check(n_models=100, seed=0, max_qubits=6, max_params=60, step=1e-4)
    pipe = _pipeline_fd_error(make_rng(3))
    ok = res["passed"] and res["max_abs_shift_vs_adjoint"] <= 1e-9 and res["max_abs_shift_vs_finite_diff"] <= 1e-6 and pipe <= 1e-5
    check(3, "gradient oracle", ok,
          f"adjoint {res['max_abs_shift_vs_adjoint']:.1e}, finite diff {res['max_abs_shift_vs_finite_diff']:.1e} over 100 models; "
          f"full pipeline {pipe:.1e}")


def test_04_lambda_schedule():
    grid = [lambda_schedule(p) for p in np.linspace(0, 1, 1001)]
    ok = grid[0] == 0.0 and abs(grid[-1] - 0.9999092) <= 1e-6 and bool(np.all(np.diff(grid) > 0))
    check(4, "lambda schedule", ok, f"lambda(0)={grid[0]}, lambda(1)={grid[-1]:.7f}, strictly increasing")


def test_05_parameter_counts():
    a, b = build_model("mnist-usps-8q").n_params, build_model("syn-svhn-10q").n_params
    check(5, "parameter counts", a == 246 and b == 300, f"8-qubit {a}, 10-qubit {b}")


USPS_PAIRS = [((0.7318, -0.6212), 3), ((0.6636, -0.6022), 3), ((0.8358, -0.8362), 3),
          ((-0.8024, 0.6370), 6), ((-0.7916, 0.7146), 6), ((-0.7240, 0.8196), 6)]
SVHN_PAIRS = [((0.2844, 0.2486), 3), ((0.0292, -0.1624), 3), ((0.3040, -0.0062), 3),
          ((-0.0036, 0.2982), 6), ((0.1412, 0.2200), 6), ((0.2564, 0.4074), 6)]


def test_06_classification_rule():
    digits = (3, 6)
    r1 = [digits[classify_binary(*p)] for p, _ in USPS_PAIRS]
    r3 = [digits[classify_binary(*p)] for p, _ in SVHN_PAIRS]
    ok = r1 == [d for _, d in USPS_PAIRS] and r3 == [d for _, d in SVHN_PAIRS]
    check(6, "classification rule", ok, f"USPS pairs -> {r1}, SVHN pairs -> {r3}")


def _bundled(seed, lam=None):
    resolved = resolve_run_config(_read_json(BUNDLED_RUN), seed=seed, lambda_override=lam)
    return resolved, load_datasets(resolved), build_model(resolved["model"])


def test_07_ablation_is_source_classifier():
    resolved, sets, model = _bundled(0, lam=0.0)
    cfg = TrainConfig.from_dict(resolved["train"])
    a = train(sets["source"], sets["target"].unlabeled(), model, cfg)
    plain = TrainConfig.from_dict({**resolved["train"], "lambda_override": None, "adapt": False})
    b = train(sets["source"], sets["target"].unlabeled(), model, plain)
    q2 = model.head_slice("QFC2")
    frozen = np.array_equal(np.array(a.final_params)[q2], np.array(a.initial_params)[q2])
    same = np.array(a.final_params).tobytes() == np.array(b.final_params).tobytes()
    check(7, "lambda=0 ablation", frozen and same,
          f"QFC2 unchanged: {frozen}; bitwise equal to source-only run: {same}")


def test_08_adaptation_gain():
    t0 = time.perf_counter()
    on, off = [], []
    for seed in range(5):
        for lam, acc in ((None, on), (0.0, off)):
            resolved, sets, model = _bundled(seed, lam)
            rep = train(sets["source"], sets["target"].unlabeled(), model, TrainConfig.from_dict(resolved["train"]))
            acc.append(evaluate(sets["target_test"], model, np.array(rep.final_params))["accuracy"])
    gain = float(np.mean(on) - np.mean(off))
    dt = time.perf_counter() - t0
    check(8, "adaptation gain", gain >= GAIN_THRESHOLD and dt < 15 * 60,
          f"target accuracy {np.mean(on):.3f} with reversal vs {np.mean(off):.3f} at lambda=0, "
          f"gain {100 * gain:+.1f} points (need >= {100 * GAIN_THRESHOLD:.0f}), {dt:.0f}s")


def mnist_usps_config(root: Path) -> dict:
    """Digits 3 vs 6, MNIST (IDX) to USPS (16x16 CSV), reduced sizes."""

    def pick(*names):
        for n in names:
            if (root / n).exists():
                return str(root / n)
        raise FileNotFoundError(f"none of {names} under {root}")

    return {
        "name": "mnist-usps-reduced",
        "model": "mnist-usps-8q",
        "seed": 0,
        "train": {"epochs": 20, "batch_size": 16, "learning_rate": 0.01},
        "data": {
            "kind": "digits",
            "digits": [3, 6],
            "target_size": 16,
            "source": {
                "format": "idx",
                "images": pick("train-images-idx3-ubyte", "train-images-idx3-ubyte.gz"),
                "labels": pick("train-labels-idx1-ubyte", "train-labels-idx1-ubyte.gz"),
            },
            "target": {"format": "csv", "path": pick("usps.csv"), "width": 16, "height": 16},
            "source_split": [500, 200],
            "target_split": [200, 100],
        },
    }


def test_09_mnist_usps_reduced():
    root = os.environ.get(DATA_ENV)
    if not root:
        ACCEPTANCE_LINES[9] = f"[SKIP]  9. MNIST to USPS: set {DATA_ENV} to a directory with MNIST IDX files and usps.csv"
        pytest.skip(f"{DATA_ENV} not set")
    t0 = time.perf_counter()
    resolved = resolve_run_config(mnist_usps_config(Path(root)))
    sets = load_datasets(resolved)
    model = build_model(resolved["model"])
    rep = train(sets["source"], sets["target"].unlabeled(), model, TrainConfig.from_dict(resolved["train"]))
    acc = evaluate(sets["target_test"], model, np.array(rep.final_params))["accuracy"]
    dt = time.perf_counter() - t0
    check(9, "MNIST to USPS", acc >= 0.70 and dt < 2 * 3600, f"target test accuracy {acc:.3f} (need >= 0.70), {dt:.0f}s")


def test_10_encoder_fidelity():
    dim = 16
    rand = [train_encoder(make_rng([s, 7]).uniform(size=dim), seed=s).fidelity for s in range(20)]
    basis = [train_encoder(np.eye(dim)[k], seed=k).fidelity for k in range(dim)]
    med, low = float(np.median(rand)), float(np.min(basis))
    check(10, "encoder fidelity", med >= 0.9 and low >= 0.999,
          f"median {med:.5f} over 20 random targets, worst basis state {low:.6f}")
