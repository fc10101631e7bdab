"""Parameterized circuits: container, forward execution, bookkeeping, JSON form."""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import qstate
from .gates import ROTATIONS, GateSpec
from .qstate import DTYPE, DomainError, StateVector

TWO_PI = 2 * np.pi


def apply_gate_(psi: np.ndarray, g: GateSpec, angle: float, n: int) -> np.ndarray:
    kind = g.kind
    if kind == "RZ":
        e = np.exp(-0.5j * angle)
        return qstate.apply_diag_1q_(psi, e, e.conjugate(), g.qubits[0], n)
    if kind == "RY":
        c, s = np.cos(angle / 2), np.sin(angle / 2)
        return qstate.apply_1q_(psi, np.array([[c, -s], [s, c]]), g.qubits[0], n)
    if kind == "CNOT":
        return qstate.apply_cnot_(psi, g.qubits[0], g.qubits[1], n)
    if kind == "X":
        return qstate.apply_x_(psi, g.qubits[0], n)
    if kind == "H":
        return qstate.apply_1q_(psi, g.matrix(), g.qubits[0], n)
    raise DomainError(f"cannot apply {kind}")


@dataclass(frozen=True)
class ParamCircuit:
    n_qubits: int
    gates: tuple[GateSpec, ...]
    n_params: int
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "gates", tuple(self.gates))
        cited = set()
        for g in self.gates:
            for q in g.qubits:
                if not 0 <= q < self.n_qubits:
                    raise DomainError(f"gate {g.kind} references qubit {q} of {self.n_qubits}")
            for s in g.slots:
                if not 0 <= s < self.n_params:
                    raise DomainError(f"slot {s} outside [0, {self.n_params})")
                cited.add(s)
        if len(cited) != self.n_params:
            missing = sorted(set(range(self.n_params)) - cited)
            raise DomainError(f"slots never referenced: {missing[:10]}")

    def angles(self, params: np.ndarray) -> np.ndarray:
        """Angle of every gate (0 for fixed gates)."""
        return np.array([g.angle(params) if g.kind in ROTATIONS else 0.0 for g in self.gates])

    def dagger(self) -> "ParamCircuit":
        return ParamCircuit(
            self.n_qubits,
            tuple(g.inverse() for g in reversed(self.gates)),
            self.n_params,
            dict(self.metadata),
        )

    def slot_tags(self) -> dict[int, str]:
        out = {}
        for g in self.gates:
            for s in g.slots:
                out.setdefault(s, g.tag)
        return out

    def to_dict(self) -> dict:
        return {
            "n_qubits": self.n_qubits,
            "n_params": self.n_params,
            "gates": [
                {
                    "kind": g.kind,
                    "qubits": list(g.qubits),
                    "slots": list(g.slots),
                    "coeffs": list(g.coeffs),
                    "offset": g.offset,
                    "tag": g.tag,
                }
                for g in self.gates
            ],
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ParamCircuit":
        gates = [
            GateSpec(
                g["kind"],
                tuple(g["qubits"]),
                tuple(g.get("slots", ())),
                tuple(float(c) for c in g.get("coeffs", ())),
                float(g.get("offset", 0.0)),
                g.get("tag", ""),
            )
            for g in d["gates"]
        ]
        return cls(d["n_qubits"], tuple(gates), d["n_params"], d.get("metadata", {}))

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_json(cls, s: str) -> "ParamCircuit":
        return cls.from_dict(json.loads(s))


class CircuitBuilder:
    """Accumulates gates and hands out fresh parameter slots."""

    def __init__(self, n_qubits: int):
        self.n_qubits = n_qubits
        self.gates: list[GateSpec] = []
        self.n_params = 0

    def new_slots(self, k: int) -> list[int]:
        out = list(range(self.n_params, self.n_params + k))
        self.n_params += k
        return out

    def add(self, gates: Sequence[GateSpec]) -> "CircuitBuilder":
        self.gates.extend(gates)
        return self

    def build(self, **metadata) -> ParamCircuit:
        return ParamCircuit(self.n_qubits, tuple(self.gates), self.n_params, metadata)


def _as_params(circuit: ParamCircuit, params) -> np.ndarray:
    p = np.asarray(params, dtype=float).reshape(-1)
    if p.shape[0] != circuit.n_params:
        raise DomainError(f"circuit needs {circuit.n_params} params, got {p.shape[0]}")
    return p


def as_batch(psi, n_qubits: int) -> np.ndarray:
    """Fresh C-contiguous complex copy of shape ``(batch, 2**n)``."""
    if isinstance(psi, StateVector):
        psi = psi.amplitudes
    arr = np.array(psi, dtype=DTYPE, order="C", copy=True)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.shape[1] != 2**n_qubits:
        raise DomainError(f"state dimension {arr.shape[1]} does not match {n_qubits} qubits")
    return arr


def run_batch(circuit: ParamCircuit, params, psi) -> np.ndarray:
    """Apply the circuit to every row of ``psi``; the input is not modified."""
    p = _as_params(circuit, params)
    out = as_batch(psi, circuit.n_qubits)
    n = circuit.n_qubits
    for g in circuit.gates:
        apply_gate_(out, g, g.angle(p), n)
    return out


def run(circuit: ParamCircuit, params, input: StateVector) -> StateVector:
    if input.n_qubits != circuit.n_qubits:
        raise DomainError("input qubit count does not match circuit")
    return StateVector(circuit.n_qubits, run_batch(circuit, params, input)[0])


def run_reference(circuit: ParamCircuit, params, input: StateVector) -> StateVector:
    """Slow path: multiply explicit ``2**n`` matrices."""
    p = _as_params(circuit, params)
    n = circuit.n_qubits
    psi = input.amplitudes.copy()
    for g in circuit.gates:
        u = g.matrix(p)
        psi = qstate.full_operator(u, list(g.qubits), n) @ psi
    return StateVector(n, psi)


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based generator; identical streams across platforms."""
    return np.random.Generator(np.random.Philox(seed))


def init_params(circuit: ParamCircuit | int, seed: int) -> np.ndarray:
    n = circuit if isinstance(circuit, int) else circuit.n_params
    return make_rng(seed).uniform(0.0, TWO_PI, size=n)


def count_report(circuit: ParamCircuit) -> dict:
    blocks: dict[str, dict] = {}
    slot_owner: dict[int, set] = {}
    for g in circuit.gates:
        b = blocks.setdefault(g.tag, {"rotations": 0, "cnots": 0, "other": 0, "n_params": 0})
        if g.kind in ROTATIONS:
            b["rotations"] += 1
        elif g.kind == "CNOT":
            b["cnots"] += 1
        else:
            b["other"] += 1
        for s in g.slots:
            slot_owner.setdefault(s, set()).add(g.tag)
    per_tag = Counter(min(tags) for tags in slot_owner.values())
    for tag, k in per_tag.items():
        blocks[tag]["n_params"] = k
    return {
        "rotations": sum(b["rotations"] for b in blocks.values()),
        "cnots": sum(b["cnots"] for b in blocks.values()),
        "n_params": circuit.n_params,
        "blocks": blocks,
    }
