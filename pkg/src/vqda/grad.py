"""Gradient engines: parameter shift, adjoint sweep, and central finite differences.

All three differentiate the weighted objective ``F = sum_b sum_j w[b, j] <O_j>_b``
over a batch of input states, where each ``O_j`` is a Z or X on one qubit.
``grad_through_features`` chains a head and the extractor across the
measurement boundary.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import qstate
from .ansatz import VqdaModel, encode_features, extractor_forward, product_state
from .circuit import ParamCircuit, apply_gate_, as_batch, run_batch
from .gates import ROTATIONS
from .qstate import DomainError

SHIFT = np.pi / 2


class ConfigError(ValueError):
    """A circuit the chosen engine cannot differentiate."""


@dataclass
class GradRequest:
    circuit: ParamCircuit
    params: np.ndarray
    input: np.ndarray
    observables: Sequence[tuple[int, str]]
    weights: np.ndarray

    def __post_init__(self):
        n = self.circuit.n_qubits
        self.params = np.asarray(self.params, dtype=float)
        if self.params.shape != (self.circuit.n_params,):
            raise DomainError(
                f"circuit needs {self.circuit.n_params} params, got {self.params.shape}"
            )
        self.input = as_batch(self.input, n)
        self.observables = [(int(q), str(b)) for q, b in self.observables]
        for q, basis in self.observables:
            if not 0 <= q < n or basis not in ("X", "Z"):
                raise DomainError(f"bad observable ({q}, {basis})")
        w = np.asarray(self.weights, dtype=float)
        if w.ndim == 1:
            w = np.broadcast_to(w, (self.input.shape[0], w.shape[0]))
        if w.shape != (self.input.shape[0], len(self.observables)):
            raise DomainError("weights length must equal observable count")
        self.weights = np.ascontiguousarray(w)
        for g in self.circuit.gates:
            if g.slots and g.kind not in ROTATIONS:
                raise ConfigError(f"{g.kind} carries a slot but has no shift rule")


def objective(req: GradRequest, params=None) -> float:
    p = req.params if params is None else params
    psi = run_batch(req.circuit, p, req.input)
    return _weighted(psi, req)


def _weighted(psi: np.ndarray, req: GradRequest) -> float:
    e = qstate.expectations(psi, req.observables, req.circuit.n_qubits)
    return float(np.sum(e * req.weights))


def _scatter(circuit: ParamCircuit, gate_grads: np.ndarray) -> np.ndarray:
    """Chain d/d(angle) per gate into d/d(slot) through the affine angle map."""
    out = np.zeros(circuit.n_params)
    for g, d in zip(circuit.gates, gate_grads):
        for s, c in zip(g.slots, g.coeffs):
            out[s] += c * d
    return out


def grad_param_shift(req: GradRequest, shift: float = SHIFT) -> np.ndarray:
    """Two-term shift rule applied gate by gate; shared slots accumulate.

    ``shift`` exists for fault injection; the exact rule needs ``pi / 2``.
    """
    c = req.circuit
    n = c.n_qubits
    angles = c.angles(req.params)
    gate_grads = np.zeros(len(c.gates))
    # prefix states avoid re-running the head of the circuit for every gate
    psi = req.input.copy()
    for k, g in enumerate(c.gates):
        if g.slots:
            vals = []
            for sgn in (1.0, -1.0):
                tmp = psi.copy()
                apply_gate_(tmp, g, angles[k] + sgn * shift, n)
                for j in range(k + 1, len(c.gates)):
                    apply_gate_(tmp, c.gates[j], angles[j], n)
                vals.append(_weighted(tmp, req))
            gate_grads[k] = (vals[0] - vals[1]) / 2
        apply_gate_(psi, g, angles[k], n)
    return _scatter(c, gate_grads)


def adjoint_sweep(
    circuit: ParamCircuit, params, psi_out: np.ndarray, lam: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Backward sweep from output states ``psi_out`` with ``lam = H psi_out``.

    Returns slot gradients summed over the batch and the pulled-back ``lam``
    at the circuit input, so that ``dF = 2 Re <lam_in | d psi_in>``.
    Both arrays passed in are consumed.
    """
    n = circuit.n_qubits
    p = np.asarray(params, dtype=float)
    gate_grads = np.zeros(len(circuit.gates))
    psi, lam = psi_out, lam
    for k in range(len(circuit.gates) - 1, -1, -1):
        g = circuit.gates[k]
        if g.kind in ROTATIONS:
            a = g.angle(p)
            if g.slots:
                # dU/da = -i/2 P U, so dF/da = Im <lam | P psi_k>
                ppsi = qstate.apply_pauli(psi, g.qubits[0], g.kind[1], n)
                gate_grads[k] = np.vdot(lam, ppsi).imag
            apply_gate_(psi, g, -a, n)
            apply_gate_(lam, g, -a, n)
        else:  # X, H and CNOT are self-inverse
            apply_gate_(psi, g, 0.0, n)
            apply_gate_(lam, g, 0.0, n)
    return _scatter(circuit, gate_grads), lam


def grad_adjoint(req: GradRequest) -> np.ndarray:
    c = req.circuit
    psi = run_batch(c, req.params, req.input)
    lam = qstate.observable_apply(psi, req.observables, req.weights, c.n_qubits)
    grads, _ = adjoint_sweep(c, req.params, psi, lam)
    return grads


def grad_finite_diff(req: GradRequest, step: float = 1e-4) -> np.ndarray:
    if step <= 0:
        raise DomainError("step must be positive")
    out = np.zeros(req.circuit.n_params)
    for s in range(req.circuit.n_params):
        p = req.params.copy()
        p[s] += step
        fp = objective(req, p)
        p[s] -= 2 * step
        fm = objective(req, p)
        out[s] = (fp - fm) / (2 * step)
    return out


ENGINES = {"adjoint": grad_adjoint, "param_shift": grad_param_shift}


# ---------------------------------------------------------------------------
# through the measurement boundary
# ---------------------------------------------------------------------------


def head_backward(
    head, head_params, features: np.ndarray, loss_grad: np.ndarray, engine: str = "adjoint"
) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of ``sum_b loss_grad[b] . head(features[b])``.

    Returns ``(d/d head_params, d/d features)``; the re-encoded angles are
    treated as per-sample inputs to the head circuit.
    """
    f = np.atleast_2d(np.asarray(features, dtype=float))
    w = np.atleast_2d(np.asarray(loss_grad, dtype=float))
    k = head.n_feature_qubits
    angles = head.feature_map.angle(f)
    psi0 = encode_features(head, f)
    if engine == "adjoint":
        psi = run_batch(head.circuit, head_params, psi0)
        lam = qstate.observable_apply(psi, head.observables, w, k)
        g_head, lam_in = adjoint_sweep(head.circuit, head_params, psi, lam)
        c, s = np.cos(angles / 2), np.sin(angles / 2)
        d_angle = np.empty_like(f)
        for j in range(k):
            c0, c1 = c.copy(), s.copy()
            c0[:, j] = -s[:, j] / 2
            c1[:, j] = c[:, j] / 2
            dpsi = product_state(c0, c1)
            d_angle[:, j] = 2 * np.einsum("bi,bi->b", lam_in.conj(), dpsi).real
    elif engine == "param_shift":
        req = GradRequest(head.circuit, head_params, psi0, head.observables, w)
        g_head = grad_param_shift(req)
        d_angle = np.empty_like(f)
        for j in range(k):
            vals = []
            for sgn in (1.0, -1.0):
                a = angles.copy()
                a[:, j] += sgn * SHIFT
                out = run_batch(head.circuit, head_params, product_state(np.cos(a / 2), np.sin(a / 2)))
                e = qstate.expectations(out, head.observables, k)
                vals.append(np.sum(e * w, axis=1))
            d_angle[:, j] = (vals[0] - vals[1]) / 2
    else:
        raise DomainError(f"unknown engine {engine!r}")
    return g_head, d_angle * head.feature_map.derivative(f)


def extractor_backward(
    model: VqdaModel, cp, psi_in: np.ndarray, feature_grad: np.ndarray, engine: str = "adjoint"
) -> np.ndarray:
    """Gradient of ``sum_b feature_grad[b] . features(psi_in[b])`` w.r.t. the extractor."""
    obs = [(q, model.feature_basis) for q in model.active]
    req = GradRequest(model.extractor, cp, psi_in, obs, feature_grad)
    return ENGINES[engine](req)


def grad_through_features(
    model: VqdaModel, params, input, head_sel: str, loss_grad, engine: str = "adjoint"
) -> dict[str, np.ndarray]:
    """Split gradient ``{"cp": ..., "head": ...}`` of a loss on one head's expectations.

    ``loss_grad`` holds dL/d(expectation), shape ``(batch, m)`` or ``(m,)``.
    """
    if head_sel not in ("QFC1", "QFC2"):
        raise DomainError("head_sel must be QFC1 or QFC2")
    cp, p1, p2 = model.split(params)
    head = model.head(head_sel)
    hp = p1 if head_sel == "QFC1" else p2
    psi = as_batch(input, model.n_qubits)
    _, f = extractor_forward(model, cp, psi)
    g_head, g_f = head_backward(head, hp, f, loss_grad, engine)
    g_cp = extractor_backward(model, cp, psi, g_f, engine)
    return {"cp": g_cp, "head": g_head}


# ---------------------------------------------------------------------------
# randomized three-way suite
# ---------------------------------------------------------------------------


def random_instance(rng: np.random.Generator, max_qubits: int = 6, max_params: int = 60) -> GradRequest:
    """Random circuit mixing two-qubit blocks, poolers, controlled-V, shared slots, both bases."""
    from .circuit import CircuitBuilder
    from .gates import (
        GateSpec,
        controlled_1q_gates,
        pooler_gates,
        rot,
        universal_2q_gates,
    )

    n = int(rng.integers(2, max_qubits + 1))
    b = CircuitBuilder(n)
    pool: list[int] = []

    def slots(k):
        # reuse existing slots now and then to exercise sharing
        out = []
        for _ in range(k):
            if pool and rng.random() < 0.25:
                out.append(int(rng.choice(pool)))
            elif b.n_params < max_params:
                s = b.new_slots(1)[0]
                pool.append(s)
                out.append(s)
            elif pool:
                out.append(int(rng.choice(pool)))
            else:
                out.append(b.new_slots(1)[0])
        return out

    def pair():
        a, c = rng.choice(n, size=2, replace=False)
        return int(a), int(c)

    for _ in range(int(rng.integers(2, 7))):
        choice = rng.integers(0, 6)
        if choice == 0 and b.n_params + 15 <= max_params:
            b.add(universal_2q_gates(*pair(), slots(15), "U"))
        elif choice == 1 and b.n_params + 9 <= max_params:
            c, t = pair()
            b.add(pooler_gates(c, t, slots(9), int(rng.integers(0, 2)), "P"))
        elif choice == 2:
            c, t = pair()
            b.add(controlled_1q_gates(c, t, slots(3), int(rng.integers(0, 2)), "CV"))
        elif choice == 3:
            q = int(rng.integers(0, n))
            b.add([rot(str(rng.choice(["RY", "RZ"])), q, slots(1)[0], tag="R")])
        elif choice == 4:
            q = int(rng.integers(0, n))
            b.add([GateSpec("H", (q,), tag="F"), GateSpec("X", (q,), tag="F")])
        else:
            b.add([GateSpec("CNOT", pair(), tag="F")])
    if b.n_params == 0:
        b.add([rot("RY", 0, b.new_slots(1)[0], tag="R")])
    circuit = b.build()
    params = rng.uniform(0, 2 * np.pi, circuit.n_params)
    batch = int(rng.integers(1, 4))
    psi = rng.normal(size=(batch, 2**n)) + 1j * rng.normal(size=(batch, 2**n))
    psi /= np.linalg.norm(psi, axis=1, keepdims=True)
    m = int(rng.integers(1, n + 1))
    qs = rng.choice(n, size=m, replace=False)
    obs = [(int(q), str(rng.choice(["X", "Z"]))) for q in qs]
    weights = rng.normal(size=(batch, m))
    return GradRequest(circuit, params, psi, obs, weights)


def three_way_check(
    n_models: int = 100,
    seed: int = 0,
    max_qubits: int = 6,
    max_params: int = 60,
    step: float = 1e-4,
    shift: float = SHIFT,
) -> dict:
    """Param-shift vs adjoint vs finite differences over random instances."""
    rng = np.random.Generator(np.random.Philox(seed))
    worst_adj, worst_fd = 0.0, 0.0
    for _ in range(n_models):
        req = random_instance(rng, max_qubits, max_params)
        ps = grad_param_shift(req, shift=shift)
        worst_adj = max(worst_adj, float(np.max(np.abs(ps - grad_adjoint(req)), initial=0.0)))
        worst_fd = max(worst_fd, float(np.max(np.abs(ps - grad_finite_diff(req, step)), initial=0.0)))
    return {
        "n_models": n_models,
        "max_abs_shift_vs_adjoint": worst_adj,
        "max_abs_shift_vs_finite_diff": worst_fd,
        "passed": worst_adj <= 1e-9 and worst_fd <= 1e-6,
    }
