"""
Statevector Simulation of the Variational Quantum Circuit

Exact simulation of the angle-encoded, strongly entangling circuit used as the
OPF regressor. Amplitude index k stores qubit q in bit q of k (little-endian).

Two evaluation paths exist:
1. Gate by gate (apply_gate / run_circuit), the reference semantics
2. Layer unitaries applied to many inputs and many parameter vectors at once
   (expectations_batch), used by training and the parameter-shift rule
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from src.exceptions import ArgumentError, ConfigurationError, DimensionError
from src.scaling import ANGLE_RANGE, Scaling

logger = logging.getLogger(__name__)

MAX_QUBITS = 24
NORM_TOLERANCE = 1e-10


class GateKind(str, Enum):
    RX = "RX"
    RY = "RY"
    RZ = "RZ"
    ROT = "Rot"
    CNOT = "CNOT"
    PAULI_X = "PauliX"


_PARAM_COUNT = {
    GateKind.RX: 1,
    GateKind.RY: 1,
    GateKind.RZ: 1,
    GateKind.ROT: 3,
    GateKind.CNOT: 0,
    GateKind.PAULI_X: 0,
}

_PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
# basis order |control, target>
_CNOT = np.array(
    [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]],
    dtype=complex,
)


def rx_matrix(angle: float) -> np.ndarray:
    c, s = np.cos(angle / 2), np.sin(angle / 2)
    return np.array([[c, -1j * s], [-1j * s, c]], dtype=complex)


def ry_matrix(angle: float) -> np.ndarray:
    c, s = np.cos(angle / 2), np.sin(angle / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


def rz_matrix(angle: float) -> np.ndarray:
    return np.array([[np.exp(-0.5j * angle), 0], [0, np.exp(0.5j * angle)]], dtype=complex)


def rot_matrices(alpha: np.ndarray, beta: np.ndarray, gamma: np.ndarray) -> np.ndarray:
    """
    Vectorised Rot(alpha, beta, gamma) = RZ(alpha) RY(beta) RZ(gamma)

    Args:
        alpha, beta, gamma: Arrays of identical shape S

    Returns:
        Complex array of shape S + (2, 2)
    """
    alpha, beta, gamma = np.broadcast_arrays(
        np.asarray(alpha, dtype=float), np.asarray(beta, dtype=float), np.asarray(gamma, dtype=float)
    )
    c, s = np.cos(beta / 2), np.sin(beta / 2)
    plus = np.exp(-0.5j * (alpha + gamma))
    minus = np.exp(-0.5j * (alpha - gamma))
    out = np.empty(alpha.shape + (2, 2), dtype=complex)
    out[..., 0, 0] = plus * c
    out[..., 0, 1] = -minus * s
    out[..., 1, 0] = np.conj(minus) * s
    out[..., 1, 1] = np.conj(plus) * c
    return out


def gate_matrix(kind: GateKind, angles: Sequence[float] = ()) -> np.ndarray:
    """Matrix realization of a gate (2x2, or 4x4 for CNOT)"""
    kind = GateKind(kind)
    if len(angles) != _PARAM_COUNT[kind]:
        raise ConfigurationError(f"{kind.value} takes {_PARAM_COUNT[kind]} angles, got {len(angles)}")
    if kind is GateKind.RX:
        return rx_matrix(angles[0])
    if kind is GateKind.RY:
        return ry_matrix(angles[0])
    if kind is GateKind.RZ:
        return rz_matrix(angles[0])
    if kind is GateKind.ROT:
        return rot_matrices(*angles)
    if kind is GateKind.CNOT:
        return _CNOT.copy()
    return _PAULI_X.copy()


@dataclass(frozen=True)
class GateOp:
    kind: GateKind
    target: int
    control: Optional[int] = None
    param_indices: Tuple[int, ...] = ()

    def validate(self, n_qubits: int, n_params: Optional[int] = None) -> None:
        kind = GateKind(self.kind)
        if not 0 <= self.target < n_qubits:
            raise ConfigurationError(f"target qubit {self.target} out of range for {n_qubits} qubits")
        if kind is GateKind.CNOT:
            if self.control is None or not 0 <= self.control < n_qubits:
                raise ConfigurationError(f"CNOT control {self.control} out of range for {n_qubits} qubits")
            if self.control == self.target:
                raise ConfigurationError("CNOT control and target must differ")
        elif self.control is not None:
            raise ConfigurationError(f"{kind.value} does not take a control qubit")
        if len(self.param_indices) != _PARAM_COUNT[kind]:
            raise ConfigurationError(f"{kind.value} expects {_PARAM_COUNT[kind]} parameter indices")
        if n_params is not None and any(not 0 <= i < n_params for i in self.param_indices):
            raise ConfigurationError(f"parameter index out of range in {self}")


@dataclass
class StateVector:
    n_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex)
        if self.amplitudes.shape != (2 ** self.n_qubits,):
            raise DimensionError(
                f"{self.n_qubits}-qubit state needs {2 ** self.n_qubits} amplitudes, got {self.amplitudes.shape}"
            )

    def norm_squared(self) -> float:
        return float(np.sum(np.abs(self.amplitudes) ** 2))

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2


@dataclass(frozen=True)
class Observable:
    """Pauli-Z on a single qubit; eigenvalues +1 (bit 0) and -1 (bit 1)"""

    qubit: int = 0
    operator: str = "Z"

    @property
    def eigenvalues(self) -> Tuple[float, float]:
        return (1.0, -1.0)

    def signs(self, n_qubits: int) -> np.ndarray:
        if not 0 <= self.qubit < n_qubits:
            raise ConfigurationError(f"observable qubit {self.qubit} out of range for {n_qubits} qubits")
        bits = (np.arange(2 ** n_qubits) >> self.qubit) & 1
        return 1.0 - 2.0 * bits


def _check_width(n_qubits: int) -> None:
    if not 1 <= n_qubits <= MAX_QUBITS:
        raise ConfigurationError(f"n_qubits must be in [1, {MAX_QUBITS}], got {n_qubits}")


def _apply_single_qubit(amps: np.ndarray, matrix: np.ndarray, qubit: int, n_qubits: int) -> np.ndarray:
    lead = amps.shape[:-1]
    view = amps.reshape(lead + (2 ** (n_qubits - qubit - 1), 2, 2 ** qubit))
    out = np.einsum("...ij,...ajc->...aic", matrix, view)
    return out.reshape(lead + (2 ** n_qubits,))


def _cnot_permutation(control: int, target: int, n_qubits: int) -> np.ndarray:
    k = np.arange(2 ** n_qubits)
    return k ^ (((k >> control) & 1) << target)


def init_state(n_qubits: int) -> StateVector:
    """|0...0> on n_qubits"""
    _check_width(n_qubits)
    amps = np.zeros(2 ** n_qubits, dtype=complex)
    amps[0] = 1.0
    return StateVector(n_qubits, amps)


def apply_gate(state: StateVector, gate: GateOp, theta: Optional[np.ndarray] = None) -> StateVector:
    """
    Apply one gate to a state

    Args:
        state: Input state
        gate: Gate description; rotation angles are read from theta[gate.param_indices]
        theta: Parameter vector

    Returns:
        New state (the input is not modified)
    """
    theta = np.zeros(0) if theta is None else np.asarray(theta, dtype=float)
    gate.validate(state.n_qubits, theta.size)
    kind = GateKind(gate.kind)
    n = state.n_qubits
    if kind is GateKind.CNOT:
        perm = _cnot_permutation(gate.control, gate.target, n)
        return StateVector(n, state.amplitudes[perm])
    matrix = gate_matrix(kind, [theta[i] for i in gate.param_indices])
    return StateVector(n, _apply_single_qubit(state.amplitudes, matrix, gate.target, n))


def _encode_batch(X: np.ndarray) -> np.ndarray:
    """Product states for each row of X; returns shape (M, 2**n)"""
    half = 0.5 * X
    amps = np.stack([np.cos(half[:, 0]), np.sin(half[:, 0])], axis=1)
    for q in range(1, X.shape[1]):
        column = np.stack([np.cos(half[:, q]), np.sin(half[:, q])], axis=1)
        amps = (column[:, :, None] * amps[:, None, :]).reshape(X.shape[0], -1)
    return amps.astype(complex)


def angle_encode(x: Sequence[float], n_qubits: Optional[int] = None) -> StateVector:
    """
    Angle encoding: qubit i is prepared as cos(x_i/2)|0> + sin(x_i/2)|1>
    """
    x = np.asarray(x, dtype=float).ravel()
    n = x.size if n_qubits is None else n_qubits
    if x.size != n:
        raise DimensionError(f"feature vector has length {x.size}, register has {n} qubits")
    _check_width(n)
    return StateVector(n, _encode_batch(x[None, :])[0])


def expectation(state: StateVector, obs: Observable) -> float:
    """<psi| Z_q |psi>"""
    return float(np.dot(obs.signs(state.n_qubits), state.probabilities()))


def sample_expectation(state: StateVector, obs: Observable, shots: int, rng: np.random.Generator) -> float:
    """
    Estimate <Z_q> from `shots` projective measurements

    Each shot yields +1 with probability of the qubit reading 0, otherwise -1.
    """
    if shots < 1:
        raise ArgumentError(f"shots must be >= 1, got {shots}")
    signs = obs.signs(state.n_qubits)
    p_plus = float(np.clip(np.sum(state.probabilities()[signs > 0]), 0.0, 1.0))
    n_plus = int(rng.binomial(shots, p_plus))
    return (2 * n_plus - shots) / shots


class CircuitModel:
    """
    Angle encoding followed by L strongly entangling layers and a trailing
    rotation layer. Layer l, qubit q uses theta[3*(l*n + q) : 3*(l*n + q) + 3]
    as Rot(alpha, beta, gamma); layer L is the trailing rotation layer.
    """

    def __init__(
        self,
        n_qubits: int,
        n_layers: int,
        theta: Optional[Sequence[float]] = None,
        entangle_range: int = 1,
        scaling: Optional[Scaling] = None,
        observable: Observable = Observable(),
    ):
        _check_width(n_qubits)
        if n_layers < 0:
            raise ConfigurationError(f"n_layers must be >= 0, got {n_layers}")
        if entangle_range < 1 or (n_qubits > 1 and entangle_range % n_qubits == 0):
            raise ConfigurationError(f"entangle_range {entangle_range} invalid for {n_qubits} qubits")
        self.n_qubits = n_qubits
        self.n_layers = n_layers
        self.entangle_range = entangle_range
        self.scaling = scaling
        self.observable = observable
        observable.signs(n_qubits)
        if theta is None:
            theta = np.zeros(self.n_params)
        self.theta = np.asarray(theta, dtype=float).copy()
        if self.theta.shape != (self.n_params,):
            raise DimensionError(f"theta must have {self.n_params} entries, got {self.theta.size}")
        if not np.all(np.isfinite(self.theta)):
            raise ConfigurationError("theta contains non-finite angles")
        self._ring = self._ring_permutation()

    @classmethod
    def random(cls, n_qubits: int, n_layers: int, rng: np.random.Generator, **kwargs) -> "CircuitModel":
        size = 3 * n_qubits * (n_layers + 1)
        return cls(n_qubits, n_layers, theta=rng.uniform(0.0, 2.0 * np.pi, size=size), **kwargs)

    @property
    def n_params(self) -> int:
        return 3 * self.n_qubits * (self.n_layers + 1)

    @property
    def params(self) -> np.ndarray:
        return self.theta

    def with_params(self, theta: np.ndarray) -> "CircuitModel":
        return CircuitModel(
            self.n_qubits,
            self.n_layers,
            theta=theta,
            entangle_range=self.entangle_range,
            scaling=self.scaling,
            observable=self.observable,
        )

    def entangler_pairs(self) -> List[Tuple[int, int]]:
        if self.n_qubits == 1:
            return []
        n = self.n_qubits
        return [(i, (i + self.entangle_range) % n) for i in range(n)]

    def ansatz_gates(self) -> List[GateOp]:
        """Variational part of the circuit as a gate list (encoding excluded)"""
        gates: List[GateOp] = []
        n = self.n_qubits
        for layer in range(self.n_layers + 1):
            for q in range(n):
                base = 3 * (layer * n + q)
                gates.append(GateOp(GateKind.ROT, q, param_indices=(base, base + 1, base + 2)))
            if layer < self.n_layers:
                gates.extend(GateOp(GateKind.CNOT, t, control=c) for c, t in self.entangler_pairs())
        return gates

    def _ring_permutation(self) -> np.ndarray:
        index = np.arange(2 ** self.n_qubits)
        for control, target in self.entangler_pairs():
            index = index[_cnot_permutation(control, target, self.n_qubits)]
        return index

    def layer_unitaries(self, thetas: np.ndarray) -> List[np.ndarray]:
        """
        Per-layer unitaries (rotation layer, then CNOT ring when present)

        Args:
            thetas: Parameter vectors, shape (K, n_params)

        Returns:
            L + 1 arrays of shape (K, 2**n, 2**n)
        """
        n = self.n_qubits
        K = thetas.shape[0]
        angles = thetas.reshape(K, self.n_layers + 1, n, 3)
        mats = rot_matrices(angles[..., 0], angles[..., 1], angles[..., 2])
        unitaries = []
        for layer in range(self.n_layers + 1):
            U = mats[:, layer, n - 1]
            for q in range(n - 2, -1, -1):
                d = U.shape[-1]
                U = np.einsum("kij,kab->kiajb", U, mats[:, layer, q]).reshape(K, 2 * d, 2 * d)
            if layer < self.n_layers and n > 1:
                U = U[:, self._ring, :]
            unitaries.append(U)
        return unitaries

    def states_batch(self, X: np.ndarray, thetas: np.ndarray) -> np.ndarray:
        """
        Final states for every (input, parameter vector) pair

        Returns:
            Array of shape (K, 2**n, M)
        """
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.n_qubits:
            raise DimensionError(f"expected {self.n_qubits} features, got {X.shape[1]}")
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        psi = _encode_batch(X).T
        for U in self.layer_unitaries(thetas):
            psi = U @ psi
        return psi

    def expectations_batch(self, X: np.ndarray, thetas: Optional[np.ndarray] = None) -> np.ndarray:
        """<Z_obs> for every input row and parameter vector; shape (M, K)"""
        thetas = self.theta[None, :] if thetas is None else thetas
        psi = self.states_batch(X, thetas)
        signs = self.observable.signs(self.n_qubits)
        return np.einsum("d,kdm->mk", signs, np.abs(psi) ** 2)

    def forward(self, X: np.ndarray) -> np.ndarray:
        """Model output in the scaled target space [-1, 1] for encoded inputs"""
        return self.expectations_batch(X)[:, 0]

    def loss_and_grads(self, X: np.ndarray, y: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        from src.gradients import batch_loss_grad

        return batch_loss_grad(self, X, y)

    def encode_features(self, X_raw: np.ndarray) -> np.ndarray:
        if self.scaling is None:
            raise ConfigurationError("model has no feature scaling attached")
        return self.scaling.transform_features(X_raw, ANGLE_RANGE)

    def predict(self, X_raw: np.ndarray) -> np.ndarray:
        """Prediction in physical units for raw (unscaled) feature rows"""
        encoded = self.encode_features(X_raw)
        return self.scaling.inverse_target(self.forward(encoded))

    def final_state(self, x_raw: Sequence[float]) -> StateVector:
        angles = self.encode_features(np.asarray(x_raw, dtype=float)[None, :])[0]
        return run_circuit(self, angles)

    def predict_shots(
        self, X_raw: np.ndarray, shots: int, repeats: int, rng: np.random.Generator
    ) -> Tuple[np.ndarray, np.ndarray]:
        """
        Shot-based predictions in physical units

        Returns:
            (mean, std) over `repeats` independent estimates of `shots` shots each
        """
        if shots < 1 or repeats < 1:
            raise ArgumentError("shots and repeats must be >= 1")
        X_raw = np.atleast_2d(X_raw)
        psi = self.states_batch(self.encode_features(X_raw), self.theta[None, :])[0]
        signs = self.observable.signs(self.n_qubits)
        p_plus = np.clip(np.sum(np.abs(psi[signs > 0, :]) ** 2, axis=0), 0.0, 1.0)
        n_plus = rng.binomial(shots, np.broadcast_to(p_plus, (repeats, p_plus.size)))
        estimates = self.scaling.inverse_target((2.0 * n_plus - shots) / shots)
        std = estimates.std(axis=0, ddof=1) if repeats > 1 else np.zeros(p_plus.size)
        return estimates.mean(axis=0), std

    def to_dict(self) -> Dict[str, Any]:
        payload: Dict[str, Any] = {
            "n_qubits": self.n_qubits,
            "n_layers": self.n_layers,
            "entangle_range": self.entangle_range,
            "theta": self.theta.tolist(),
        }
        if self.scaling is not None:
            payload.update(self.scaling.to_dict())
        return payload

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> "CircuitModel":
        scaling = Scaling.from_dict(payload) if payload.get("feature_scale") else None
        return cls(
            int(payload["n_qubits"]),
            int(payload["n_layers"]),
            theta=payload["theta"],
            entangle_range=int(payload.get("entangle_range", 1)),
            scaling=scaling,
        )


def run_circuit(model: CircuitModel, x: Sequence[float]) -> StateVector:
    """Encode x, then apply every ansatz gate in order"""
    state = angle_encode(x, model.n_qubits)
    for gate in model.ansatz_gates():
        state = apply_gate(state, gate, model.theta)
    return state


def _asap_depth(operations: Iterable[Tuple[int, ...]], n_qubits: int) -> int:
    frontier = np.zeros(n_qubits, dtype=int)
    for qubits in operations:
        stage = int(frontier[list(qubits)].max()) + 1
        frontier[list(qubits)] = stage
    return int(frontier.max())


def circuit_depth(model: CircuitModel) -> int:
    """
    Longest path through the gate dependency graph

    Gates on disjoint qubits share a stage; the encoding rotations form one
    stage and each Rot counts as a single gate.
    """
    ops: List[Tuple[int, ...]] = [(q,) for q in range(model.n_qubits)]
    for gate in model.ansatz_gates():
        if GateKind(gate.kind) is GateKind.CNOT:
            ops.append((gate.control, gate.target))
        else:
            ops.append((gate.target,))
    return _asap_depth(ops, model.n_qubits)
