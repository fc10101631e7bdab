"""Dense statevector simulation.

Bit ordering: qubit 0 is the leftmost tensor factor, so basis index bit
``n - 1 - q`` holds qubit ``q``. A bitstring printed as ``b_0 b_1 ... b_{n-1}``
therefore lists qubit 0 first (most significant). Plots that list outcomes
"from right to left" show the same string reversed.

Two layers live here. The batched kernels (trailing underscore) act in place on
arrays of shape ``(batch, 2**n)`` through strided views and never materialise
a ``2**n x 2**n`` operator. The ``StateVector`` functions on top are
functional: they copy, apply, and return.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from typing import Sequence

import numpy as np

DTYPE = np.complex128
UNITARY_ATOL = 1e-10


class DomainError(ValueError):
    """An argument outside the domain of an operation."""


@dataclass
class StateVector:
    n_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=DTYPE)
        if self.n_qubits < 1:
            raise DomainError("n_qubits must be >= 1")
        if self.amplitudes.shape != (2**self.n_qubits,):
            raise DomainError(
                f"expected {2**self.n_qubits} amplitudes, got {self.amplitudes.shape}"
            )

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def copy(self) -> "StateVector":
        return StateVector(self.n_qubits, self.amplitudes.copy())

    def bitstring(self, index: int) -> str:
        """Basis label of ``index`` with qubit 0 leftmost."""
        return format(index, f"0{self.n_qubits}b")


def _check_qubit(q: int, n: int) -> None:
    if not 0 <= q < n:
        raise DomainError(f"qubit {q} out of range for {n} qubits")


def is_unitary(u: np.ndarray, atol: float = UNITARY_ATOL) -> bool:
    u = np.asarray(u)
    return np.allclose(u.conj().T @ u, np.eye(u.shape[0]), atol=atol, rtol=0)


# ---------------------------------------------------------------------------
# batched in-place kernels
# ---------------------------------------------------------------------------


def _split(psi: np.ndarray, q: int, n: int) -> np.ndarray:
    return psi.reshape(psi.shape[0], 2**q, 2, 2 ** (n - q - 1))


def apply_1q_(psi: np.ndarray, u: np.ndarray, q: int, n: int) -> np.ndarray:
    v = _split(psi, q, n)
    a0 = v[:, :, 0, :].copy()
    a1 = v[:, :, 1, :]
    v[:, :, 0, :] = u[0, 0] * a0 + u[0, 1] * a1
    v[:, :, 1, :] = u[1, 0] * a0 + u[1, 1] * a1
    return psi


def apply_diag_1q_(psi: np.ndarray, d0: complex, d1: complex, q: int, n: int) -> np.ndarray:
    v = _split(psi, q, n)
    v[:, :, 0, :] *= d0
    v[:, :, 1, :] *= d1
    return psi


def apply_x_(psi: np.ndarray, q: int, n: int) -> np.ndarray:
    v = _split(psi, q, n)
    tmp = v[:, :, 0, :].copy()
    v[:, :, 0, :] = v[:, :, 1, :]
    v[:, :, 1, :] = tmp
    return psi


def apply_cnot_(psi: np.ndarray, control: int, target: int, n: int) -> np.ndarray:
    v = psi.reshape((psi.shape[0],) + (2,) * n)
    i0 = [slice(None)] * (n + 1)
    i0[1 + control] = 1
    i1 = list(i0)
    i0[1 + target] = 0
    i1[1 + target] = 1
    i0, i1 = tuple(i0), tuple(i1)
    tmp = v[i0].copy()
    v[i0] = v[i1]
    v[i1] = tmp
    return psi


def apply_2q_(psi: np.ndarray, u: np.ndarray, q_hi: int, q_lo: int, n: int) -> np.ndarray:
    b = psi.shape[0]
    v = psi.reshape((b,) + (2,) * n)
    moved = np.moveaxis(v, (1 + q_hi, 1 + q_lo), (-2, -1))
    shape = moved.shape
    out = (moved.reshape(-1, 4) @ u.T).reshape(shape)
    v[...] = np.moveaxis(out, (-2, -1), (1 + q_hi, 1 + q_lo))
    return psi


def z_expectations(psi: np.ndarray, qubits: Sequence[int], n: int) -> np.ndarray:
    """Z expectation of each listed qubit, shape ``(batch, len(qubits))``."""
    probs = (psi.real**2 + psi.imag**2).reshape((psi.shape[0],) + (2,) * n)
    out = np.empty((psi.shape[0], len(qubits)))
    for j, q in enumerate(qubits):
        axes = tuple(1 + a for a in range(n) if a != q)
        marg = probs.sum(axis=axes)
        out[:, j] = marg[:, 0] - marg[:, 1]
    return out


def apply_pauli(psi: np.ndarray, q: int, basis: str, n: int) -> np.ndarray:
    """Return ``P_q psi`` for ``P`` in {Z, X} without touching ``psi``."""
    out = psi.copy()
    if basis == "Z":
        v = _split(out, q, n)
        v[:, :, 1, :] *= -1
    elif basis == "X":
        apply_x_(out, q, n)
    elif basis == "Y":
        apply_x_(out, q, n)
        apply_diag_1q_(out, -1j, 1j, q, n)
    else:
        raise DomainError(f"unknown measurement basis {basis!r}")
    return out


def observable_apply(
    psi: np.ndarray, observables: Sequence[tuple[int, str]], weights: np.ndarray, n: int
) -> np.ndarray:
    """``sum_j w[:, j] * O_j psi`` with per-sample weights of shape ``(batch, m)``."""
    out = np.zeros_like(psi)
    for j, (q, basis) in enumerate(observables):
        out += weights[:, j, None] * apply_pauli(psi, q, basis, n)
    return out


def expectations(psi: np.ndarray, observables: Sequence[tuple[int, str]], n: int) -> np.ndarray:
    out = np.empty((psi.shape[0], len(observables)))
    for j, (q, basis) in enumerate(observables):
        out[:, j] = np.einsum("bi,bi->b", psi.conj(), apply_pauli(psi, q, basis, n)).real
    return out


# ---------------------------------------------------------------------------
# single-state API
# ---------------------------------------------------------------------------


def new_basis_state(n_qubits: int, basis_index: int) -> StateVector:
    if n_qubits < 1:
        raise DomainError("n_qubits must be >= 1")
    if not 0 <= basis_index < 2**n_qubits:
        raise DomainError(f"basis index {basis_index} out of range for {n_qubits} qubits")
    amps = np.zeros(2**n_qubits, dtype=DTYPE)
    amps[basis_index] = 1.0
    return StateVector(n_qubits, amps)


def apply_1q(state: StateVector, u, q: int, check: bool = False) -> StateVector:
    u = np.asarray(u, dtype=DTYPE)
    _check_qubit(q, state.n_qubits)
    if u.shape != (2, 2):
        raise DomainError("single-qubit gate must be 2x2")
    if check and not is_unitary(u):
        raise DomainError("gate matrix is not unitary")
    psi = state.amplitudes.copy()[None, :]
    apply_1q_(psi, u, q, state.n_qubits)
    return StateVector(state.n_qubits, psi[0])


def apply_2q(state: StateVector, u, q_hi: int, q_lo: int, check: bool = False) -> StateVector:
    u = np.asarray(u, dtype=DTYPE)
    _check_qubit(q_hi, state.n_qubits)
    _check_qubit(q_lo, state.n_qubits)
    if q_hi == q_lo:
        raise DomainError("two-qubit gate needs distinct qubits")
    if u.shape != (4, 4):
        raise DomainError("two-qubit gate must be 4x4")
    if check and not is_unitary(u):
        raise DomainError("gate matrix is not unitary")
    psi = state.amplitudes.copy()[None, :]
    apply_2q_(psi, u, q_hi, q_lo, state.n_qubits)
    return StateVector(state.n_qubits, psi[0])


def expect_z(state: StateVector, q: int) -> float:
    _check_qubit(q, state.n_qubits)
    return float(z_expectations(state.amplitudes[None, :], [q], state.n_qubits)[0, 0])


def expect_x(state: StateVector, q: int) -> float:
    _check_qubit(q, state.n_qubits)
    psi = state.amplitudes[None, :]
    return float(expectations(psi, [(q, "X")], state.n_qubits)[0, 0])


def probabilities_on(state: StateVector, qs: Sequence[int]) -> np.ndarray:
    """Marginal outcome distribution; the first listed qubit is the most significant bit."""
    qs = list(qs)
    n = state.n_qubits
    for q in qs:
        _check_qubit(q, n)
    if len(set(qs)) != len(qs):
        raise DomainError("duplicate qubit indices")
    probs = np.abs(state.amplitudes.reshape((2,) * n)) ** 2
    rest = tuple(a for a in range(n) if a not in qs)
    marg = probs.sum(axis=rest) if rest else probs
    # remaining axes are in ascending qubit order; reorder to the requested order
    order = sorted(qs)
    marg = np.transpose(marg, [order.index(q) for q in qs])
    return marg.reshape(-1)


# ---------------------------------------------------------------------------
# slow reference path
# ---------------------------------------------------------------------------


def full_operator(u: np.ndarray, qubits: Sequence[int], n: int) -> np.ndarray:
    """Explicit ``2**n`` matrix of ``u`` acting on ``qubits`` (in that order)."""
    u = np.asarray(u, dtype=DTYPE)
    k = len(qubits)
    if k == 1:
        mats = [u if a == qubits[0] else np.eye(2) for a in range(n)]
        return reduce(np.kron, mats)
    # general case: permute basis so ``qubits`` lead, then act
    dim = 2**n
    op = np.zeros((dim, dim), dtype=DTYPE)
    for col in range(dim):
        bits = [(col >> (n - 1 - a)) & 1 for a in range(n)]
        sub = 0
        for a in qubits:
            sub = (sub << 1) | bits[a]
        for row_sub in range(2**k):
            amp = u[row_sub, sub]
            if amp == 0:
                continue
            new_bits = list(bits)
            for j, a in enumerate(qubits):
                new_bits[a] = (row_sub >> (k - 1 - j)) & 1
            row = 0
            for a in range(n):
                row = (row << 1) | new_bits[a]
            op[row, col] += amp
    return op
