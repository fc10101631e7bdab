"""VQDA model assembly: feature extractor, measurement plan, and the two QFC heads.

The flat parameter vector is laid out as ``[extractor | QFC1 | QFC2]``.
Heads run on a fresh register: each extractor feature ``f`` (a Z expectation)
is loaded as ``RY(pi * (1 + f) / 2)`` on its own qubit before the head circuit.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from . import qstate
from .circuit import CircuitBuilder, ParamCircuit, as_batch, count_report, run_batch
from .gates import cnot, controlled_1q_gates, pooler_gates, rot, universal_2q_gates
from .qstate import DomainError, StateVector

FEATURE_TOL = 1e-9


@dataclass(frozen=True)
class AffineAngleMap:
    """Feature-to-angle map paired with its derivative."""

    scale: float = np.pi / 2
    shift: float = np.pi / 2

    def angle(self, f):
        return self.shift + self.scale * np.asarray(f)

    def derivative(self, f):
        return np.full_like(np.asarray(f, dtype=float), self.scale)


@dataclass(frozen=True)
class ModelConfig:
    name: str = "custom"
    n_qubits: int = 4
    n_stages: int = 1
    sharing: bool = False
    pooler: str = "abc"  # "abc": free A, B, C (9 slots); "controlled": controlled-V (3 slots)
    control_state: int = 1
    qfc1_layers: int = 2
    qfc2_layers: int = 2
    n_classes: int = 2
    qfc1_basis: str = "X"
    qfc2_basis: str = "Z"
    qfc1_measured: tuple[int, ...] | None = None
    qfc2_measured: tuple[int, ...] | None = None
    notes: str = ""

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise DomainError(f"unknown model config keys: {sorted(unknown)}")
        d = dict(d)
        for key in ("qfc1_measured", "qfc2_measured"):
            if d.get(key) is not None:
                d[key] = tuple(d[key])
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("qfc1_measured", "qfc2_measured"):
            if d[key] is not None:
                d[key] = list(d[key])
        return d


BUNDLED = ("mnist-usps-8q", "syn-svhn-10q", "toy-4q")


def load_model_config(ref: str | dict | Path) -> ModelConfig:
    """Bundled name, path to a JSON file, or an inline dict."""
    if isinstance(ref, ModelConfig):
        return ref
    if isinstance(ref, dict):
        return ModelConfig.from_dict(ref)
    ref = str(ref)
    if ref in BUNDLED:
        text = resources.files("vqda.configs").joinpath(f"{ref}.json").read_text()
    else:
        text = Path(ref).read_text()
    return ModelConfig.from_dict(json.loads(text))


# ---------------------------------------------------------------------------
# extractor
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class QclBlock:
    layer_index: int
    pairing: tuple[tuple[int, int], ...]
    shared: bool


@dataclass(frozen=True)
class QplBlock:
    layer_index: int
    poolers: tuple[tuple[int, int, int, tuple[int, ...]], ...]
    dropped: tuple[int, ...]


def build_extractor(
    n_qubits: int,
    n_stages: int,
    sharing: bool = False,
    pooler: str = "abc",
    control_state: int = 1,
) -> tuple[ParamCircuit, list[int]]:
    """Alternating QCL/QPL stages; each QPL halves the active set (ceil for odd counts)."""
    if n_stages < 1:
        raise DomainError("n_stages must be >= 1")
    if n_qubits < 2**n_stages:
        raise DomainError(f"{n_stages} pooling stages reduce {n_qubits} qubits below 1")
    if pooler not in ("abc", "controlled"):
        raise DomainError(f"unknown pooler {pooler!r}")
    b = CircuitBuilder(n_qubits)
    active = list(range(n_qubits))
    qcls, qpls = [], []
    for i in range(1, n_stages + 1):
        tag = f"QCL{i}"
        pairs = tuple(zip(active[:-1], active[1:]))
        shared_slots = b.new_slots(15) if sharing and pairs else None
        for qa, qb in pairs:
            slots = shared_slots or b.new_slots(15)
            b.add(universal_2q_gates(qa, qb, slots, tag))
        qcls.append(QclBlock(i, pairs, sharing))

        tag = f"QPL{i}"
        width = 9 if pooler == "abc" else 3
        shared_slots = b.new_slots(width) if sharing and len(active) > 1 else None
        poolers = []
        for j in range(0, len(active) - 1, 2):
            target, control = active[j], active[j + 1]
            slots = shared_slots or b.new_slots(width)
            if pooler == "abc":
                b.add(pooler_gates(control, target, slots, control_state, tag))
            else:
                b.add(controlled_1q_gates(control, target, slots, control_state, tag))
            poolers.append((control, target, control_state, tuple(slots)))
        dropped = tuple(p[0] for p in poolers)
        qpls.append(QplBlock(i, tuple(poolers), dropped))
        active = active[0::2]
    circuit = b.build(
        qcl=[asdict(q) for q in qcls], qpl=[asdict(q) for q in qpls], active=list(active)
    )
    return circuit, active


# ---------------------------------------------------------------------------
# heads
# ---------------------------------------------------------------------------


def qfc_layer_gates(k: int, slots: Sequence[int], tag: str = "") -> list:
    """One QFC layer on ``k`` adjacent qubits: 6 rotations and 2 CNOTs.

    The six rotations are spread evenly (``6 / k`` per qubit, cycling RZ, RY, RZ
    for three, RY, RZ for two). CNOTs: ``0->1, 1->0`` for two qubits, a ladder
    ``0->1, 1->2`` otherwise.
    """
    if k < 2 or 6 % k:
        raise DomainError(f"a QFC layer needs 2, 3 or 6 qubits, got {k}")
    per = 6 // k
    kinds = {1: ["RY"], 2: ["RY", "RZ"], 3: ["RZ", "RY", "RZ"]}[per]
    s = iter(slots)
    gates = [rot(kind, q, next(s), tag=tag) for q in range(k) for kind in kinds]
    if k == 2:
        gates += [cnot(0, 1, tag), cnot(1, 0, tag)]
    else:
        gates += [cnot(0, 1, tag), cnot(1, 2, tag)]
    return gates


@dataclass(frozen=True)
class QfcHead:
    n_feature_qubits: int
    n_layers: int
    circuit: ParamCircuit
    basis: str
    measured: tuple[int, ...]
    feature_map: AffineAngleMap = field(default_factory=AffineAngleMap)

    @property
    def observables(self) -> list[tuple[int, str]]:
        return [(q, self.basis) for q in self.measured]

    @property
    def n_params(self) -> int:
        return self.circuit.n_params


def build_head(k: int, n_layers: int, basis: str, measured: Sequence[int], tag: str) -> QfcHead:
    if basis not in ("X", "Z"):
        raise DomainError(f"unknown readout basis {basis!r}")
    if any(not 0 <= q < k for q in measured) or len(set(measured)) != len(measured):
        raise DomainError(f"measured qubits {measured} invalid for a {k}-qubit head")
    b = CircuitBuilder(k)
    for _ in range(n_layers):
        b.add(qfc_layer_gates(k, b.new_slots(6), tag))
    return QfcHead(k, n_layers, b.build(), basis, tuple(measured))


def encode_features(head: QfcHead, features: np.ndarray) -> np.ndarray:
    """Product state ``prod_j RY(angle(f_j))|0>``, shape ``(batch, 2**k)``."""
    f = np.atleast_2d(np.asarray(features, dtype=float))
    if f.shape[1] != head.n_feature_qubits:
        raise DomainError(f"head expects {head.n_feature_qubits} features, got {f.shape[1]}")
    if np.any(np.abs(f) > 1 + FEATURE_TOL):
        raise DomainError("features must lie in [-1, 1]")
    a = head.feature_map.angle(f)
    return product_state(np.cos(a / 2), np.sin(a / 2))


def product_state(c0: np.ndarray, c1: np.ndarray) -> np.ndarray:
    """Batched kron of per-qubit vectors ``(c0[:, j], c1[:, j])``, qubit 0 leftmost."""
    out = np.ones((c0.shape[0], 1), dtype=qstate.DTYPE)
    for j in range(c0.shape[1]):
        v = np.stack([c0[:, j], c1[:, j]], axis=1)
        out = (out[:, :, None] * v[:, None, :]).reshape(c0.shape[0], -1)
    return out


def head_forward(head: QfcHead, head_params, features) -> np.ndarray:
    """Per-qubit expectations of the head's measured qubits in its readout basis."""
    single = np.ndim(features) == 1
    psi = run_batch(head.circuit, head_params, encode_features(head, features))
    out = qstate.expectations(psi, head.observables, head.n_feature_qubits)
    return out[0] if single else out


# ---------------------------------------------------------------------------
# full model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class VqdaModel:
    config: ModelConfig
    extractor: ParamCircuit
    active: tuple[int, ...]
    qfc1: QfcHead
    qfc2: QfcHead
    feature_basis: str = "Z"

    @property
    def n_qubits(self) -> int:
        return self.extractor.n_qubits

    @property
    def n_params(self) -> int:
        return self.extractor.n_params + self.qfc1.n_params + self.qfc2.n_params

    def split(self, params) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        p = np.asarray(params, dtype=float)
        if p.shape != (self.n_params,):
            raise DomainError(f"model needs {self.n_params} params, got {p.shape}")
        a = self.extractor.n_params
        b = a + self.qfc1.n_params
        return p[:a], p[a:b], p[b:]

    def head(self, which: str) -> QfcHead:
        return {"QFC1": self.qfc1, "QFC2": self.qfc2}[which]

    def head_slice(self, which: str) -> slice:
        a = self.extractor.n_params
        b = a + self.qfc1.n_params
        return {"QFC1": slice(a, b), "QFC2": slice(b, self.n_params)}[which]


def build_model(config: ModelConfig | str | dict) -> VqdaModel:
    cfg = load_model_config(config)
    extractor, active = build_extractor(
        cfg.n_qubits, cfg.n_stages, cfg.sharing, cfg.pooler, cfg.control_state
    )
    k = len(active)
    m1 = cfg.qfc1_measured if cfg.qfc1_measured is not None else tuple(range(cfg.n_classes))
    m2 = cfg.qfc2_measured if cfg.qfc2_measured is not None else (0, 1)
    if len(m1) != cfg.n_classes:
        raise DomainError("QFC1 must measure one qubit per class")
    if len(m2) != 2:
        raise DomainError("QFC2 must measure two qubits (source, target)")
    qfc1 = build_head(k, cfg.qfc1_layers, cfg.qfc1_basis, m1, "QFC1")
    qfc2 = build_head(k, cfg.qfc2_layers, cfg.qfc2_basis, m2, "QFC2")
    return VqdaModel(cfg, extractor, tuple(active), qfc1, qfc2)


def extractor_forward(model: VqdaModel, cp, psi) -> tuple[np.ndarray, np.ndarray]:
    """Output states and Z features on the active qubits (ascending order)."""
    out = run_batch(model.extractor, cp, psi)
    return out, qstate.z_expectations(out, model.active, model.n_qubits)


def extract_features(model: VqdaModel, params, input_state) -> np.ndarray:
    if isinstance(input_state, StateVector) and input_state.n_qubits != model.n_qubits:
        raise DomainError("input qubit count does not match model")
    cp, _, _ = model.split(params)
    single = isinstance(input_state, StateVector) or np.ndim(input_state) == 1
    _, f = extractor_forward(model, cp, as_batch(input_state, model.n_qubits))
    return f[0] if single else f


def predict_expectations(model: VqdaModel, params, psi, which: str = "QFC1") -> np.ndarray:
    cp, p1, p2 = model.split(params)
    _, f = extractor_forward(model, cp, psi)
    return head_forward(model.head(which), p1 if which == "QFC1" else p2, f)


def classify_binary(p1: float, p2: float) -> int:
    return 0 if p1 >= p2 else 1


def classify_mary(p) -> int:
    p = np.asarray(p, dtype=float).reshape(-1)
    if p.size == 0:
        raise DomainError("empty expectation vector")
    return int(np.argmax(p))  # first maximum wins ties


def param_partition(model: VqdaModel) -> dict[str, range]:
    a = model.extractor.n_params
    b = a + model.qfc1.n_params
    return {"theta_cp": range(0, a), "theta_qfc1": range(a, b), "theta_qfc2": range(b, model.n_params)}


def describe(model: VqdaModel) -> dict:
    """Per-block gate and parameter breakdown."""
    rep = count_report(model.extractor)
    blocks = dict(rep["blocks"])
    for name, head in (("QFC1", model.qfc1), ("QFC2", model.qfc2)):
        hr = count_report(head.circuit)
        blocks[name] = {
            "rotations": hr["rotations"],
            "cnots": hr["cnots"],
            "other": 0,
            "n_params": head.n_params,
            "layers": head.n_layers,
            "readout": head.basis,
            "measured": list(head.measured),
        }
    part = param_partition(model)
    return {
        "name": model.config.name,
        "n_qubits": model.n_qubits,
        "active_qubits": list(model.active),
        "blocks": blocks,
        "theta_cp": len(part["theta_cp"]),
        "theta_qfc1": len(part["theta_qfc1"]),
        "theta_qfc2": len(part["theta_qfc2"]),
        "total_params": model.n_params,
    }
