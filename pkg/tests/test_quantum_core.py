"""
Tests for the statevector simulator and the circuit model
"""

import numpy as np
import pytest

from src.exceptions import ArgumentError, ConfigurationError, DimensionError
from src.quantum_core import (
    CircuitModel,
    GateKind,
    GateOp,
    Observable,
    StateVector,
    angle_encode,
    apply_gate,
    circuit_depth,
    expectation,
    gate_matrix,
    init_state,
    run_circuit,
    sample_expectation,
)
from src.scaling import Scaling


def test_init_state_is_all_zeros_basis_state():
    state = init_state(3)
    assert state.amplitudes[0] == 1.0
    assert state.norm_squared() == pytest.approx(1.0)


@pytest.mark.parametrize("n", [0, 25])
def test_register_width_limits(n):
    with pytest.raises(ConfigurationError):
        init_state(n)


def test_state_vector_shape_is_checked():
    with pytest.raises(DimensionError):
        StateVector(2, np.ones(3))


def test_pauli_x_flips_qubit():
    state = apply_gate(init_state(2), GateOp(GateKind.PAULI_X, 1))
    assert abs(state.amplitudes[0b10]) == pytest.approx(1.0)


def test_cnot_acts_on_target_when_control_set():
    state = apply_gate(init_state(2), GateOp(GateKind.PAULI_X, 0))
    state = apply_gate(state, GateOp(GateKind.CNOT, 1, control=0))
    assert abs(state.amplitudes[0b11]) == pytest.approx(1.0)


def test_cnot_control_equal_target_rejected():
    with pytest.raises(ConfigurationError):
        apply_gate(init_state(2), GateOp(GateKind.CNOT, 0, control=0))


def test_gate_parameter_index_out_of_range():
    gate = GateOp(GateKind.RX, 0, param_indices=(3,))
    with pytest.raises(ConfigurationError):
        apply_gate(init_state(1), gate, np.zeros(2))


def test_rx_pi_maps_zero_to_one():
    state = apply_gate(init_state(1), GateOp(GateKind.RX, 0, param_indices=(0,)), np.array([np.pi]))
    assert expectation(state, Observable(0)) == pytest.approx(-1.0, abs=1e-12)


def test_rot_equals_rz_ry_rz_product():
    a, b, c = 0.3, -1.1, 2.4
    expected = gate_matrix(GateKind.RZ, [a]) @ gate_matrix(GateKind.RY, [b]) @ gate_matrix(GateKind.RZ, [c])
    np.testing.assert_allclose(gate_matrix(GateKind.ROT, [a, b, c]), expected, atol=1e-14)


def test_gate_matrices_are_unitary():
    rng = np.random.default_rng(0)
    for _ in range(200):
        for kind, count in ((GateKind.RX, 1), (GateKind.RY, 1), (GateKind.RZ, 1), (GateKind.ROT, 3)):
            U = gate_matrix(kind, rng.uniform(-10, 10, size=count))
            np.testing.assert_allclose(U @ U.conj().T, np.eye(2), atol=1e-12)
    for kind in (GateKind.CNOT, GateKind.PAULI_X):
        U = gate_matrix(kind)
        np.testing.assert_allclose(U @ U.conj().T, np.eye(U.shape[0]), atol=1e-12)


def test_angle_encoding_expectations_are_cosines():
    grid = np.linspace(-2 * np.pi, 2 * np.pi, 10_000)
    X = np.stack([grid, grid[::-1]], axis=1)
    for row in X[::50]:
        state = angle_encode(row)
        assert expectation(state, Observable(0)) == pytest.approx(np.cos(row[0]), abs=1e-10)
        assert expectation(state, Observable(1)) == pytest.approx(np.cos(row[1]), abs=1e-10)
    # batched path over the full grid with an identity ansatz
    model = CircuitModel(2, 0, theta=np.zeros(6))
    np.testing.assert_allclose(model.forward(X), np.cos(grid), atol=1e-10)


def test_angle_encode_length_mismatch():
    with pytest.raises(DimensionError):
        angle_encode([0.1, 0.2], n_qubits=3)


def test_sample_expectation_rejects_zero_shots():
    with pytest.raises(ArgumentError):
        sample_expectation(init_state(1), Observable(0), 0, np.random.default_rng(0))


def test_sample_expectation_on_basis_state_is_exact():
    rng = np.random.default_rng(1)
    assert sample_expectation(init_state(2), Observable(0), 100, rng) == 1.0


def test_sample_expectation_converges():
    state = angle_encode([1.0])
    estimate = sample_expectation(state, Observable(0), 200_000, np.random.default_rng(2))
    assert estimate == pytest.approx(np.cos(1.0), abs=0.01)


def test_parameter_count():
    assert CircuitModel(5, 10).n_params == 165
    assert CircuitModel(1, 0).n_params == 3


def test_invalid_shapes_rejected():
    with pytest.raises(ConfigurationError):
        CircuitModel(3, -1)
    with pytest.raises(DimensionError):
        CircuitModel(2, 1, theta=np.zeros(5))
    with pytest.raises(ConfigurationError):
        CircuitModel(2, 1, theta=np.full(12, np.nan))
    with pytest.raises(ConfigurationError):
        CircuitModel(3, 1, entangle_range=3)


def test_single_qubit_model_has_no_entanglers():
    assert CircuitModel(1, 3).entangler_pairs() == []


def test_batched_forward_matches_gate_by_gate():
    rng = np.random.default_rng(3)
    for n, layers, r in ((1, 2, 1), (2, 1, 1), (3, 2, 2), (4, 1, 1)):
        model = CircuitModel.random(n, layers, rng, entangle_range=r)
        X = rng.uniform(0, np.pi, size=(4, n))
        batched = model.forward(X)
        for row, value in zip(X, batched):
            state = run_circuit(model, row)
            assert state.norm_squared() == pytest.approx(1.0, abs=1e-12)
            assert expectation(state, Observable(0)) == pytest.approx(value, abs=1e-12)


def test_random_model_is_seeded():
    a = CircuitModel.random(3, 2, np.random.default_rng(11))
    b = CircuitModel.random(3, 2, np.random.default_rng(11))
    np.testing.assert_array_equal(a.theta, b.theta)
    assert np.all((a.theta >= 0) & (a.theta < 2 * np.pi))


@pytest.mark.parametrize(
    "n, layers, depth",
    [(1, 0, 2), (1, 3, 5), (5, 0, 2), (2, 1, 5)],
)
def test_circuit_depth(n, layers, depth):
    assert circuit_depth(CircuitModel(n, layers)) == depth


def test_predict_rescales_to_target_range():
    scaling = Scaling([0.0], [1.0], 10.0, 14.0)
    model = CircuitModel(1, 0, theta=np.zeros(3), scaling=scaling)
    # raw 0 -> angle 0 -> <Z> = 1 -> top of the target range
    assert model.predict(np.array([[0.0]]))[0] == pytest.approx(14.0)
    # raw 1 -> angle pi -> <Z> = -1 -> bottom
    assert model.predict(np.array([[1.0]]))[0] == pytest.approx(10.0)


def test_predict_requires_scaling():
    model = CircuitModel(2, 1)
    with pytest.raises(ConfigurationError):
        model.predict(np.zeros((1, 2)))
    with pytest.raises(ConfigurationError):
        model.predict_shots(np.zeros((1, 2)), shots=10, repeats=2, rng=np.random.default_rng(0))


def test_predict_shots_statistics():
    scaling = Scaling([0.0], [1.0], -1.0, 1.0)
    model = CircuitModel(1, 0, theta=np.zeros(3), scaling=scaling)
    mean, std = model.predict_shots(np.array([[0.0], [0.5]]), shots=100, repeats=10, rng=np.random.default_rng(4))
    assert mean.shape == (2,) and std.shape == (2,)
    assert mean[0] == pytest.approx(1.0) and std[0] == 0.0
    assert np.all(std >= 0)
    with pytest.raises(ArgumentError):
        model.predict_shots(np.array([[0.0]]), shots=0, repeats=10, rng=np.random.default_rng(4))


def test_model_document_restores_predictions():
    rng = np.random.default_rng(5)
    scaling = Scaling(np.zeros(3), np.ones(3), 12.0, 13.0)
    model = CircuitModel.random(3, 2, rng, entangle_range=2, scaling=scaling)
    restored = CircuitModel.from_dict(model.to_dict())
    X = rng.uniform(0, 1, size=(5, 3))
    np.testing.assert_array_equal(restored.predict(X), model.predict(X))
    assert restored.entangle_range == 2
