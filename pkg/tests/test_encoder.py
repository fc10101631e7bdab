import numpy as np
import pytest

from conftest import random_state
from vqda import qstate
from vqda.circuit import init_params, run
from vqda.encoder import (
    AmplitudeTarget,
    build_encoder_ansatz,
    encoder_objective,
    exact_encode,
    fidelity,
    prepare_encoded,
    train_encoder,
)
from vqda.gates import H
from vqda.qstate import DomainError, StateVector


def test_amplitude_target():
    t = AmplitudeTarget([3.0, 4.0])
    assert np.allclose(t.normalized, [0.6, 0.8])
    assert abs(np.linalg.norm(AmplitudeTarget(np.arange(1, 9)).normalized) - 1) < 1e-12
    for bad in ([0, 0], [1, np.nan], [1, 2, 3]):
        with pytest.raises(DomainError):
            AmplitudeTarget(bad)


def test_exact_encode_examples():
    assert np.allclose(exact_encode([1, 0, 0, 0]).amplitudes, [1, 0, 0, 0])
    assert np.allclose(exact_encode(np.ones(4)).amplitudes, 0.5)
    assert np.allclose(exact_encode([3, 4]).amplitudes, [0.6, 0.8])
    assert np.allclose(exact_encode([-3, 4]).amplitudes, [-0.6, 0.8])


def test_ansatz_structure():
    a = build_encoder_ansatz(3, 2)
    assert a.circuit.n_params == 2 * 3 * 3
    tags = [g.tag for g in a.circuit.gates if g.kind != "CNOT"]
    assert all(t.startswith("G") for t in tags)
    assert [g.qubits for g in a.circuit.gates if g.kind == "CNOT"] == [(0, 1), (1, 2)]
    with pytest.raises(DomainError):
        build_encoder_ansatz(3, 0)


def test_objective_examples():
    a = build_encoder_ansatz(2, 1)
    zero = np.zeros(a.circuit.n_params)
    assert encoder_objective(a, zero, qstate.new_basis_state(2, 3)) == pytest.approx(-1)
    assert encoder_objective(a, zero, qstate.new_basis_state(2, 0)) == pytest.approx(1)
    a1 = build_encoder_ansatz(1, 1)
    plus = qstate.apply_1q(qstate.new_basis_state(1, 0), H, 0)
    assert encoder_objective(a1, np.zeros(3), plus) == pytest.approx(0, abs=1e-15)


def test_objective_bounded_and_minus_one_iff_all_ones(rng):
    a = build_encoder_ansatz(3, 2)
    for _ in range(50):
        p = rng.uniform(0, 2 * np.pi, a.circuit.n_params)
        v = rng.normal(size=8)
        val = encoder_objective(a, p, exact_encode(v))
        assert -1 - 1e-12 <= val <= 1 + 1e-12
    ones = qstate.new_basis_state(3, 7)
    single = build_encoder_ansatz(3, 1)  # zero angles, no entangler: identity
    val = encoder_objective(single, np.zeros(single.circuit.n_params), ones)
    assert val == pytest.approx(-1)
    assert qstate.probabilities_on(ones, [0, 1, 2])[7] == pytest.approx(1)


def test_prepare_encoded_identity_and_norm(rng):
    single = build_encoder_ansatz(3, 1)
    out = prepare_encoded(np.zeros(single.circuit.n_params), single)
    assert abs(abs(out.amplitudes[7]) - 1) < 1e-12
    a = build_encoder_ansatz(3, 2)
    for seed in range(5):
        out = prepare_encoded(init_params(a.circuit, seed), a)
        assert abs(out.norm() - 1) < 1e-10


def test_prepare_inverts_training_map(rng):
    # G(p)|x> = |1..1>  <=>  G(p)^dagger |1..1> = |x>
    a = build_encoder_ansatz(2, 2)
    p = rng.uniform(0, 2 * np.pi, a.circuit.n_params)
    prepared = prepare_encoded(p, a)
    fwd = run(a.circuit, p, prepared)
    assert abs(abs(fwd.amplitudes[3]) - 1) < 1e-10


def test_train_basis_state_two_qubits():
    res = train_encoder([1, 0, 0, 0], seed=0)
    assert res.fidelity >= 0.999


def test_train_uniform_two_qubits():
    res = train_encoder(np.ones(4), seed=0)
    assert res.fidelity >= 0.99


def test_reported_fidelity_round_trip():
    x = np.random.default_rng(3).uniform(size=8)
    res = train_encoder(x, n_layers=2, steps=60, seed=1)
    a = build_encoder_ansatz(3, 2)
    direct = fidelity(prepare_encoded(res.params, a), exact_encode(x))
    assert abs(direct - res.fidelity) < 1e-9
    assert len(res.history) == 60
    assert res.converged == (res.final_objective <= -1 + 1e-6)


def test_param_shift_engine_matches_adjoint():
    x = [0.2, 0.4, 0.1, 0.9]
    a = train_encoder(x, n_layers=1, steps=5, seed=2, engine="adjoint")
    b = train_encoder(x, n_layers=1, steps=5, seed=2, engine="param_shift")
    assert np.max(np.abs(a.params - b.params)) < 1e-8


def test_fidelity_symmetric(rng):
    s, t = StateVector(2, random_state(rng, 2)), StateVector(2, random_state(rng, 2))
    assert fidelity(s, t) == pytest.approx(fidelity(t, s))
    assert fidelity(s, s) == pytest.approx(1)
