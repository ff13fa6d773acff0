"""
Analytic gradients of the circuit output via the parameter-shift rule
"""

import logging
from dataclasses import dataclass
from typing import Callable, Sequence, Tuple

import numpy as np

from src.exceptions import ArgumentError, DimensionError
from src.quantum_core import CircuitModel

logger = logging.getLogger(__name__)

SHIFT = np.pi / 2


@dataclass
class GradientVector:
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)

    def __len__(self) -> int:
        return int(self.values.size)

    def norm(self) -> float:
        return float(np.linalg.norm(self.values))

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.values)))


def shifted_parameter_sets(theta: np.ndarray, shift: float = SHIFT) -> np.ndarray:
    """
    Row 0 is theta, rows 1..P shift one entry by +shift, rows P+1..2P by -shift
    """
    theta = np.asarray(theta, dtype=float)
    P = theta.size
    offsets = shift * np.eye(P)
    return np.vstack([theta[None, :], theta + offsets, theta - offsets])


def batch_expectation_grad(model: CircuitModel, X: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Circuit outputs and their exact gradients for every input row

    Returns:
        (f, G) with f of shape (M,) and G of shape (M, P)
    """
    P = model.n_params
    E = model.expectations_batch(X, shifted_parameter_sets(model.theta))
    return E[:, 0], 0.5 * (E[:, 1 : P + 1] - E[:, P + 1 :])


def expectation_grad(model: CircuitModel, x: Sequence[float]) -> GradientVector:
    """d<Z>/d theta_j = (f(theta + pi/2 e_j) - f(theta - pi/2 e_j)) / 2"""
    _, G = batch_expectation_grad(model, np.asarray(x, dtype=float)[None, :])
    return GradientVector(G[0])


def batch_loss_grad(model: CircuitModel, X: np.ndarray, y: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Per-sample squared error and its gradient

    Args:
        X: Encoded inputs, shape (M, n_qubits)
        y: Scaled targets, shape (M,)

    Returns:
        (losses (M,), gradients (M, P))
    """
    X = np.atleast_2d(X)
    y = np.asarray(y, dtype=float).ravel()
    if y.size != X.shape[0]:
        raise DimensionError(f"{X.shape[0]} inputs but {y.size} targets")
    f, G = batch_expectation_grad(model, X)
    residual = f - y
    return residual ** 2, 2.0 * residual[:, None] * G


def loss_grad(model: CircuitModel, x: Sequence[float], y_star: float) -> Tuple[float, GradientVector]:
    losses, grads = batch_loss_grad(model, np.asarray(x, dtype=float)[None, :], np.array([y_star]))
    return float(losses[0]), GradientVector(grads[0])


def finite_diff_grad(f: Callable[[np.ndarray], float], theta: Sequence[float], h: float = 1e-6) -> GradientVector:
    """Central finite differences, used to check the analytic gradients"""
    if h <= 0:
        raise ArgumentError(f"finite difference step must be positive, got {h}")
    theta = np.asarray(theta, dtype=float)
    grad = np.empty(theta.size)
    for j in range(theta.size):
        step = np.zeros_like(theta)
        step[j] = h
        grad[j] = (f(theta + step) - f(theta - step)) / (2.0 * h)
    return GradientVector(grad)
