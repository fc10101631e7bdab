"""Adversarial training with a gradient reversal boundary, and evaluation.

Per step a labeled source batch drives the label loss (QFC1) and the domain
loss (QFC2); an unlabeled target batch drives the domain loss only. Raw batch
gradients are combined as

    theta_cp   <- grad L1 - lam * (grad^S L2 + grad^T L2)
    theta_QFC1 <- grad L1
    theta_QFC2 <- lam * (grad^S L2 + grad^T L2)

and the combined vector is handed to the optimizer. ``lam`` follows
``2 / (1 + exp(-gamma * p)) - 1`` with ``p`` the fraction of completed steps.
"""

from __future__ import annotations

import json
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import qstate
from .ansatz import (
    VqdaModel,
    classify_mary,
    extractor_forward,
    head_forward,
)
from .circuit import init_params, make_rng
from .data import DomainDataset
from .grad import extractor_backward, head_backward
from .optim import make_optimizer
from .qstate import DomainError

SOURCE_DOMAIN = 0
TARGET_DOMAIN = 1
# per-sample work is split into fixed-size chunks so results do not depend on thread count
CHUNK = 16


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 64
    learning_rate: float = 0.001
    gamma: float = 10.0
    seed: int = 0
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    lambda_override: float | None = None
    adapt: bool = True  # False trains the source classifier alone (QFC2 never evaluated)
    engine: str = "adjoint"
    threads: int = 1
    eval_every: int = 1

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.learning_rate <= 0:
            raise DomainError("epochs and batch_size must be >= 1 and learning_rate > 0")
        if self.optimizer not in ("adam", "sgd"):
            raise DomainError(f"unknown optimizer {self.optimizer!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise DomainError(f"unknown train config keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


def lambda_schedule(p: float, gamma: float = 10.0) -> float:
    if not 0.0 <= p <= 1.0:
        warnings.warn(f"progress {p} outside [0, 1]; clamped", stacklevel=2)
        p = min(max(p, 0.0), 1.0)
    return 2.0 / (1.0 + np.exp(-gamma * p)) - 1.0


class GradientReversal:
    """Identity forward; scales the gradient flowing back into the extractor by ``-lam``."""

    def __init__(self, lam: float):
        self.lam = lam

    def forward(self, x):
        return x

    def backward(self, g):
        return -self.lam * g


def cross_entropy_from_expectations(expectations, label):
    """Softmax cross-entropy over expectation values; returns ``(loss, d loss / d expectations)``.

    Works on one vector with an int label, or a batch ``(B, k)`` with ``(B,)`` labels.
    """
    e = np.asarray(expectations, dtype=float)
    single = e.ndim == 1
    e = np.atleast_2d(e)
    y = np.broadcast_to(np.asarray(label, dtype=int), (e.shape[0],))
    if np.any(y < 0) or np.any(y >= e.shape[1]):
        raise DomainError("label out of range for the number of expectations")
    z = e - e.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    rows = np.arange(e.shape[0])
    loss = -logp[rows, y]
    grad = np.exp(logp)
    grad[rows, y] -= 1.0
    if single:
        return float(loss[0]), grad[0]
    return loss, grad


# ---------------------------------------------------------------------------
# batch forward / backward
# ---------------------------------------------------------------------------


@dataclass
class BatchGrads:
    cp_label: np.ndarray
    qfc1: np.ndarray
    cp_domain: np.ndarray
    qfc2: np.ndarray
    label_loss: float
    domain_loss: float


def _chunk_grads(model, cp, p1, p2, x, y, domain, use_label, use_domain, engine):
    """Summed (not averaged) gradients over one chunk of samples."""
    n_cp = model.extractor.n_params
    out = dict(
        cp_label=np.zeros(n_cp), qfc1=np.zeros(len(p1)),
        cp_domain=np.zeros(n_cp), qfc2=np.zeros(len(p2)),
        label_loss=0.0, domain_loss=0.0,
    )
    psi = x.astype(qstate.DTYPE)
    _, f = extractor_forward(model, cp, psi)
    if use_label:
        e1 = head_forward(model.qfc1, p1, f)
        loss, g = cross_entropy_from_expectations(e1, y)
        gh, gf = head_backward(model.qfc1, p1, f, g, engine)
        out["qfc1"] = gh
        out["cp_label"] = extractor_backward(model, cp, psi, gf, engine)
        out["label_loss"] = float(loss.sum())
    if use_domain:
        e2 = head_forward(model.qfc2, p2, f)
        loss, g = cross_entropy_from_expectations(e2, np.full(len(x), domain))
        gh, gf = head_backward(model.qfc2, p2, f, g, engine)
        out["qfc2"] = gh
        out["cp_domain"] = extractor_backward(model, cp, psi, gf, engine)
        out["domain_loss"] = float(loss.sum())
    return out


def batch_grads(
    model: VqdaModel,
    params: np.ndarray,
    x: np.ndarray,
    y: np.ndarray | None,
    domain: int,
    use_label: bool,
    use_domain: bool,
    engine: str = "adjoint",
    pool: ThreadPoolExecutor | None = None,
) -> BatchGrads:
    """Batch-mean gradients of the label and/or domain loss, split by parameter group."""
    if len(x) == 0:
        raise DomainError("empty batch")
    cp, p1, p2 = model.split(params)
    starts = range(0, len(x), CHUNK)
    jobs = [
        (model, cp, p1, p2, x[s : s + CHUNK], None if y is None else y[s : s + CHUNK],
         domain, use_label, use_domain, engine)
        for s in starts
    ]
    parts = list(pool.map(lambda a: _chunk_grads(*a), jobs)) if pool else [_chunk_grads(*a) for a in jobs]
    total = parts[0]
    for p in parts[1:]:  # ascending chunk order
        for k in total:
            total[k] = total[k] + p[k]
    n = len(x)
    return BatchGrads(**{k: v / n for k, v in total.items()})


def vqda_objective(batch_s, batch_t, model: VqdaModel, params, lam: float) -> float:
    """Mean source label loss minus ``lam`` times the mean source and target domain losses.

    ``batch_s = (x, y)`` and ``batch_t = x``.
    """
    xs, ys = batch_s
    xt = batch_t
    if len(xs) == 0 or len(xt) == 0:
        raise DomainError("empty batch")
    cp, p1, p2 = model.split(params)
    _, fs = extractor_forward(model, cp, np.asarray(xs, dtype=qstate.DTYPE))
    _, ft = extractor_forward(model, cp, np.asarray(xt, dtype=qstate.DTYPE))
    l1, _ = cross_entropy_from_expectations(head_forward(model.qfc1, p1, fs), ys)
    l2s, _ = cross_entropy_from_expectations(
        head_forward(model.qfc2, p2, fs), np.full(len(xs), SOURCE_DOMAIN)
    )
    l2t, _ = cross_entropy_from_expectations(
        head_forward(model.qfc2, p2, ft), np.full(len(xt), TARGET_DOMAIN)
    )
    return float(np.mean(l1) - lam * np.mean(l2s) - lam * np.mean(l2t))


def combine(g_s: BatchGrads, g_t: BatchGrads | None, lam: float, model: VqdaModel) -> np.ndarray:
    """Apply the reversal boundary and the ``lam`` scaling to raw gradients."""
    if g_t is None:
        return np.concatenate([g_s.cp_label, g_s.qfc1, np.zeros(model.qfc2.n_params)])
    grm = GradientReversal(lam)
    cp = g_s.cp_label + grm.backward(g_s.cp_domain + g_t.cp_domain)
    q2 = lam * (g_s.qfc2 + g_t.qfc2)
    return np.concatenate([cp, g_s.qfc1, q2])


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------


def sample_expectations(probs_fn, exps: np.ndarray, shots: int, rng) -> np.ndarray:
    """Replace exact single-qubit expectations with shot estimates."""
    p0 = np.clip((1 + exps) / 2, 0.0, 1.0)
    counts = rng.binomial(shots, p0)
    return 2 * counts / shots - 1


def predict(model: VqdaModel, params, samples: np.ndarray, shots: int | None = None, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    cp, p1, _ = model.split(params)
    _, f = extractor_forward(model, cp, np.asarray(samples, dtype=qstate.DTYPE))
    if shots:
        f = sample_expectations(None, f, shots, make_rng([seed, 1]))
    e = head_forward(model.qfc1, p1, f)
    if shots:
        e = sample_expectations(None, e, shots, make_rng([seed, 2]))
    return np.array([classify_mary(row) for row in e], dtype=int), e


def evaluate(dataset: DomainDataset, model: VqdaModel, params, shots: int | None = None, seed: int = 0) -> dict:
    if dataset.labels is None:
        raise DomainError("evaluation needs labels")
    if len(dataset) == 0:
        raise DomainError("empty dataset")
    if dataset.samples.shape[1] != 2**model.n_qubits:
        raise DomainError(
            f"dataset dimension {dataset.samples.shape[1]} does not match a {model.n_qubits}-qubit model"
        )
    pred, _ = predict(model, params, dataset.samples, shots, seed)
    k = model.config.n_classes
    conf = np.zeros((k, k), dtype=int)
    for t, p in zip(dataset.labels, pred):
        conf[t, p] += 1
    per_class = [float(conf[c, c] / conf[c].sum()) if conf[c].sum() else None for c in range(k)]
    return {
        "accuracy": float(np.mean(pred == dataset.labels)),
        "per_class_accuracy": per_class,
        "confusion": conf.tolist(),
        "n": int(len(dataset)),
    }


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------


@dataclass
class TrainReport:
    epochs: list[dict] = field(default_factory=list)
    final_params: list[float] = field(default_factory=list)
    initial_params: list[float] = field(default_factory=list)
    config: dict = field(default_factory=dict)
    notes: dict = field(default_factory=dict)
    wall_clock: float = 0.0

    def summary(self) -> dict:
        """Deterministic content (no timing)."""
        last = self.epochs[-1] if self.epochs else {}
        return {
            "config": self.config,
            "notes": self.notes,
            "n_epochs": len(self.epochs),
            "final": last,
        }

    def to_json(self) -> str:
        return json.dumps(asdict(self))


def steps_per_epoch(n_source: int, n_target: int, batch_size: int) -> int:
    return min(n_source // batch_size, n_target // batch_size)


def train(
    source: DomainDataset,
    target: DomainDataset,
    model: VqdaModel,
    config: TrainConfig,
    eval_sets: dict[str, DomainDataset] | None = None,
    init: np.ndarray | None = None,
    on_epoch=None,
) -> TrainReport:
    """Adversarial training; deterministic per ``config.seed``.

    ``eval_sets`` maps names to labeled datasets scored after each epoch
    (e.g. ``{"source": ..., "target": ...}``); target labels are never used for training.
    """
    if source.labels is None:
        raise DomainError("source domain needs labels")
    if len(source) == 0 or len(target) == 0:
        raise DomainError("datasets must be nonempty")
    s = config.batch_size
    if s > len(source) or (config.adapt and s > len(target)):
        raise DomainError(f"batch size {s} larger than a dataset")
    for ds in (source, target):
        if ds.samples.shape[1] != 2**model.n_qubits:
            raise DomainError("dataset dimension does not match the model")
    t0 = time.perf_counter()
    params = init_params(model.n_params, config.seed) if init is None else np.array(init, dtype=float)
    opt = make_optimizer(config.optimizer, config.learning_rate, **(
        {"beta1": config.beta1, "beta2": config.beta2, "eps": config.eps} if config.optimizer == "adam" else {}
    ))
    rng_s = make_rng([config.seed, 1])
    rng_t = make_rng([config.seed, 2])
    n_t = len(target) if config.adapt else len(source)
    l = steps_per_epoch(len(source), n_t, s)
    total = config.epochs * l
    report = TrainReport(
        initial_params=params.tolist(),
        config={"train": config.to_dict(), "model": model.config.to_dict()},
        notes={
            "optimizer_input": "post-reversal combined gradients",
            "lambda": "override" if config.lambda_override is not None else "schedule",
            "steps_per_epoch": l,
            "total_steps": total,
        },
    )
    pool = ThreadPoolExecutor(config.threads) if config.threads > 1 else None
    step = 0
    try:
        for epoch in range(config.epochs):
            perm_s = rng_s.permutation(len(source))
            perm_t = rng_t.permutation(len(target)) if config.adapt else None
            sums = {"label_loss": 0.0, "domain_loss": 0.0}
            lam = 0.0
            for a in range(l):
                p = step / total
                lam = config.lambda_override if config.lambda_override is not None else lambda_schedule(p, config.gamma)
                idx_s = perm_s[a * s : (a + 1) * s]
                xs, ys = source.samples[idx_s], source.labels[idx_s]
                g_s = batch_grads(model, params, xs, ys, SOURCE_DOMAIN, True, config.adapt, config.engine, pool)
                g_t = None
                if config.adapt:
                    xt = target.samples[perm_t[a * s : (a + 1) * s]]
                    g_t = batch_grads(model, params, xt, None, TARGET_DOMAIN, False, True, config.engine, pool)
                grad = combine(g_s, g_t, lam, model)
                params = opt.step(params, grad)
                sums["label_loss"] += g_s.label_loss
                if g_t is not None:
                    sums["domain_loss"] += 0.5 * (g_s.domain_loss + g_t.domain_loss)
                step += 1
            rec = {
                "epoch": epoch + 1,
                "lambda": float(lam),
                "label_loss": sums["label_loss"] / max(l, 1),
                "domain_loss": sums["domain_loss"] / max(l, 1) if config.adapt else None,
            }
            if eval_sets and ((epoch + 1) % config.eval_every == 0 or epoch + 1 == config.epochs):
                for name, ds in eval_sets.items():
                    rec[f"{name}_accuracy"] = evaluate(ds, model, params)["accuracy"]
            report.epochs.append(rec)
            if on_epoch:
                on_epoch(rec)
    finally:
        if pool:
            pool.shutdown()
    report.final_params = params.tolist()
    report.wall_clock = time.perf_counter() - t0
    return report
