"""Gate library: rotation matrices, the 15-angle two-qubit block, and pooling blocks.

Rotation conventions are ``RY(t) = exp(-i t Y / 2)`` and ``RZ(t) = exp(-i t Z / 2)``.

A ``GateSpec`` angle is an affine function of the parameter vector,
``offset + sum(coeff * params[slot])``. Plain trainable rotations cite one slot
with coefficient 1; the controlled-V construction needs half-angle
combinations of V's three angles, which is why the general form exists.
Gate lists are in circuit time order (first element acts first).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .qstate import DTYPE, DomainError

ROTATIONS = ("RY", "RZ")
FIXED = ("X", "H", "CNOT")
KINDS = ROTATIONS + FIXED

I2 = np.eye(2, dtype=DTYPE)
X = np.array([[0, 1], [1, 0]], dtype=DTYPE)
Y = np.array([[0, -1j], [1j, 0]], dtype=DTYPE)
Z = np.array([[1, 0], [0, -1]], dtype=DTYPE)
H = np.array([[1, 1], [1, -1]], dtype=DTYPE) / np.sqrt(2)
# basis order |control, target>
CNOT = np.array(
    [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=DTYPE
)
SWAP = np.array(
    [[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=DTYPE
)


def ry(theta: float) -> np.ndarray:
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.array([[c, -s], [s, c]], dtype=DTYPE)


def rz(theta: float) -> np.ndarray:
    e = np.exp(-0.5j * theta)
    return np.array([[e, 0], [0, e.conjugate()]], dtype=DTYPE)


def matrix_1q(kind: str, angle: float = 0.0) -> np.ndarray:
    if kind == "RY":
        return ry(angle)
    if kind == "RZ":
        return rz(angle)
    if kind == "X":
        return X.copy()
    if kind == "H":
        return H.copy()
    raise DomainError(f"no single-qubit matrix for {kind!r}")


def generator(kind: str) -> np.ndarray:
    """Pauli ``P`` with ``R(t) = exp(-i t P / 2)``."""
    return {"RY": Y, "RZ": Z}[kind]


@dataclass(frozen=True)
class GateSpec:
    kind: str
    qubits: tuple[int, ...]
    slots: tuple[int, ...] = ()
    coeffs: tuple[float, ...] = ()
    offset: float = 0.0
    tag: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown gate kind {self.kind!r}")
        nq = 2 if self.kind == "CNOT" else 1
        if len(self.qubits) != nq:
            raise DomainError(f"{self.kind} takes {nq} qubit(s), got {self.qubits}")
        if nq == 2 and self.qubits[0] == self.qubits[1]:
            raise DomainError("CNOT control and target must differ")
        if len(self.slots) != len(self.coeffs):
            raise DomainError("slots and coeffs differ in length")
        if self.slots and self.kind not in ROTATIONS:
            raise DomainError(f"{self.kind} cannot carry a parameter slot")

    @property
    def param_slot(self) -> int | None:
        return self.slots[0] if len(self.slots) == 1 and self.coeffs[0] == 1.0 else None

    def angle(self, params: np.ndarray | None = None) -> float:
        a = self.offset
        for s, c in zip(self.slots, self.coeffs):
            a += c * params[s]
        return a

    def inverse(self) -> "GateSpec":
        if self.kind in ROTATIONS:
            return replace(
                self, coeffs=tuple(-c for c in self.coeffs), offset=-self.offset
            )
        return self

    def matrix(self, params: np.ndarray | None = None) -> np.ndarray:
        if self.kind == "CNOT":
            return CNOT.copy()
        return matrix_1q(self.kind, self.angle(params))


def rot(kind: str, q: int, slot: int | None = None, angle: float = 0.0, tag: str = "") -> GateSpec:
    if slot is None:
        return GateSpec(kind, (q,), offset=angle, tag=tag)
    return GateSpec(kind, (q,), (slot,), (1.0,), offset=angle, tag=tag)


def cnot(control: int, target: int, tag: str = "") -> GateSpec:
    return GateSpec("CNOT", (control, target), tag=tag)


def bind(gates: Sequence[GateSpec], values: Sequence[float]) -> list[GateSpec]:
    """Freeze slot references into constant offsets."""
    values = np.asarray(values, dtype=float)
    return [replace(g, slots=(), coeffs=(), offset=g.angle(values)) if g.slots else g for g in gates]


def count_gates(gates: Sequence[GateSpec]) -> dict[str, int]:
    return {
        "rotations": sum(g.kind in ROTATIONS for g in gates),
        "cnots": sum(g.kind == "CNOT" for g in gates),
    }


# ---------------------------------------------------------------------------
# universal blocks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Universal1Q:
    """``RZ(alpha) . RY(beta) . RZ(gamma)`` as a matrix product."""

    alpha: float = 0.0
    beta: float = 0.0
    gamma: float = 0.0

    def __post_init__(self):
        if not np.all(np.isfinite([self.alpha, self.beta, self.gamma])):
            raise DomainError("angles must be finite")

    @property
    def angles(self) -> tuple[float, float, float]:
        return (self.alpha, self.beta, self.gamma)

    def matrix(self) -> np.ndarray:
        return rz(self.alpha) @ ry(self.beta) @ rz(self.gamma)


@dataclass(frozen=True)
class Universal2Q:
    """Fifteen angles in slot order C(3), D(3), RY(1), RZ/RY pair(2), A(3), B(3)."""

    angles: tuple[float, ...] = field(default=(0.0,) * 15)

    def __post_init__(self):
        if len(self.angles) != 15:
            raise DomainError("Universal2Q needs exactly 15 angles")
        if not np.all(np.isfinite(self.angles)):
            raise DomainError("angles must be finite")


def universal_1q_gates(q: int, slots: Sequence[int], tag: str = "") -> list[GateSpec]:
    """Slots are (alpha, beta, gamma); the rightmost RZ acts first."""
    a, b, c = slots
    return [rot("RZ", q, c, tag=tag), rot("RY", q, b, tag=tag), rot("RZ", q, a, tag=tag)]


def universal_2q_gates(q_a: int, q_b: int, slots: Sequence[int], tag: str = "") -> list[GateSpec]:
    """``(A x B) CNOT_ab (RZ x RY) CNOT_ba (I x RY) CNOT_ab (C x D)`` in time order."""
    if q_a == q_b:
        raise DomainError("two-qubit block needs distinct qubits")
    if len(slots) != 15:
        raise DomainError("two-qubit block needs 15 slots")
    s = list(slots)
    return [
        *universal_1q_gates(q_a, s[0:3], tag),  # C
        *universal_1q_gates(q_b, s[3:6], tag),  # D
        cnot(q_a, q_b, tag),
        rot("RY", q_b, s[6], tag=tag),
        cnot(q_b, q_a, tag),
        rot("RZ", q_a, s[7], tag=tag),
        rot("RY", q_b, s[8], tag=tag),
        cnot(q_a, q_b, tag),
        *universal_1q_gates(q_a, s[9:12], tag),  # A
        *universal_1q_gates(q_b, s[12:15], tag),  # B
    ]


def compile_universal_2q(u2: Universal2Q, q_a: int, q_b: int) -> list[GateSpec]:
    return bind(universal_2q_gates(q_a, q_b, range(15)), u2.angles)


def controlled_1q_gates(
    control: int,
    target: int,
    slots: Sequence[int],
    control_state: int = 1,
    tag: str = "",
) -> list[GateSpec]:
    """Controlled-V for ``V = RZ(a) RY(b) RZ(c)`` via the ABC construction.

    ``A = RZ(a) RY(b/2)``, ``B = RY(-b/2) RZ(-(c+a)/2)``, ``C = RZ((c-a)/2)``
    so that ``ABC = I`` and ``AXBXC = V``.
    """
    if control == target:
        raise DomainError("control and target must differ")
    if control_state not in (0, 1):
        raise DomainError("control_state must be 0 or 1")
    sa, sb, sc = slots
    flip = [GateSpec("X", (control,), tag=tag)] if control_state == 0 else []
    return [
        *flip,
        GateSpec("RZ", (target,), (sc, sa), (0.5, -0.5), tag=tag),
        cnot(control, target, tag),
        GateSpec("RZ", (target,), (sc, sa), (-0.5, -0.5), tag=tag),
        GateSpec("RY", (target,), (sb,), (-0.5,), tag=tag),
        cnot(control, target, tag),
        GateSpec("RY", (target,), (sb,), (0.5,), tag=tag),
        GateSpec("RZ", (target,), (sa,), (1.0,), tag=tag),
        *flip,
    ]


def compile_controlled_1q(
    v: Universal1Q,
    control: int,
    target: int,
    control_state: int = 1,
    phase: float = 0.0,
) -> list[GateSpec]:
    """Gate list for ``|c><c| x V + (I - |c><c|) x I`` with ``c = control_state``.

    ``phase`` multiplies the active block by ``exp(i phase)``; it is realised as an
    RZ on the control, exact up to a global phase. A ``Universal1Q`` is already
    in SU(2), so the default needs no phase gate.
    """
    gates = bind(controlled_1q_gates(control, target, range(3), control_state), v.angles)
    if phase:
        sign = 1.0 if control_state == 1 else -1.0
        gates.append(rot("RZ", control, angle=sign * phase))
    return gates


def pooler_gates(
    control: int,
    target: int,
    slots: Sequence[int],
    control_state: int = 1,
    tag: str = "",
) -> list[GateSpec]:
    """Measurement-controlled pooling block with three free single-qubit unitaries.

    Time order on the target: C, CNOT, B, CNOT, A. Slots are A(3), B(3), C(3).
    The target receives ``A X B X C`` on the ``control_state`` branch and
    ``A B C`` on the other; the block is diagonal in the control's basis, so
    measuring the control first gives the same statistics.
    """
    if control == target:
        raise DomainError("control and target must differ")
    if control_state not in (0, 1):
        raise DomainError("control_state must be 0 or 1")
    s = list(slots)
    if len(s) != 9:
        raise DomainError("pooler needs 9 slots")
    flip = [GateSpec("X", (control,), tag=tag)] if control_state == 0 else []
    return [
        *flip,
        *universal_1q_gates(target, s[6:9], tag),
        cnot(control, target, tag),
        *universal_1q_gates(target, s[3:6], tag),
        cnot(control, target, tag),
        *universal_1q_gates(target, s[0:3], tag),
        *flip,
    ]


def pooler_branch_unitaries(values: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    """Target unitaries ``(W_active, W_idle)`` of a bound pooler: ``AXBXC`` and ``ABC``."""
    a = Universal1Q(*values[0:3]).matrix()
    b = Universal1Q(*values[3:6]).matrix()
    c = Universal1Q(*values[6:9]).matrix()
    return a @ X @ b @ X @ c, a @ b @ c


def controlled_matrix(v: np.ndarray, control_state: int = 1) -> np.ndarray:
    """Explicit 4x4 controlled-V in ``|control, target>`` order."""
    out = np.zeros((4, 4), dtype=DTYPE)
    active = slice(2, 4) if control_state == 1 else slice(0, 2)
    idle = slice(0, 2) if control_state == 1 else slice(2, 4)
    out[active, active] = v
    out[idle, idle] = I2
    return out


def equivalence_up_to_phase(m1, m2, atol: float = 1e-9) -> tuple[bool, float]:
    """Whether ``m1 = exp(i phi) m2``; phi is read off m2's largest entry."""
    m1 = np.asarray(m1, dtype=DTYPE)
    m2 = np.asarray(m2, dtype=DTYPE)
    if m1.shape != m2.shape:
        raise DomainError("shape mismatch")
    if not np.any(m2) or not np.any(m1):
        raise DomainError("all-zero matrix")
    k = np.unravel_index(np.argmax(np.abs(m2)), m2.shape)
    if abs(m1[k]) == 0:
        return False, float(np.max(np.abs(m1 - m2)))
    phase = m1[k] / m2[k]
    phase /= abs(phase)
    dev = float(np.max(np.abs(m1 - phase * m2)))
    return dev < atol, dev


def gates_unitary(gates: Sequence[GateSpec], n: int, params=None) -> np.ndarray:
    """Full ``2**n`` matrix of a gate list, built by pushing basis columns through."""
    from .circuit import apply_gate_

    dim = 2**n
    psi = np.eye(dim, dtype=DTYPE)  # row b is basis state b
    for g in gates:
        apply_gate_(psi, g, g.angle(params) if g.kind in ROTATIONS else 0.0, n)
    return psi.T.copy()
