"""
Tests for parameter-shift gradients
"""

import numpy as np
import pytest

from src.exceptions import ArgumentError, DimensionError
from src.gradients import (
    batch_loss_grad,
    expectation_grad,
    finite_diff_grad,
    loss_grad,
    shifted_parameter_sets,
)
from src.quantum_core import CircuitModel


def _output(model: CircuitModel, x: np.ndarray):
    return lambda theta: float(model.with_params(theta).forward(x[None, :])[0])


def test_shifted_parameter_sets_layout():
    theta = np.array([0.1, 0.2])
    rows = shifted_parameter_sets(theta)
    assert rows.shape == (5, 2)
    np.testing.assert_array_equal(rows[0], theta)
    assert rows[1, 0] == pytest.approx(0.1 + np.pi / 2)
    assert rows[4, 1] == pytest.approx(0.2 - np.pi / 2)


def test_single_rotation_gradient_is_analytic():
    # <Z> after Rot(a, b, c) on |x> depends on b as cos(x + b) for a = c = 0
    model = CircuitModel(1, 0, theta=np.array([0.0, 0.4, 0.0]))
    grad = expectation_grad(model, [0.3])
    assert grad.values[1] == pytest.approx(-np.sin(0.7), abs=1e-12)


def test_parameter_shift_matches_finite_differences():
    rng = np.random.default_rng(0)
    checked = 0
    for n in (1, 2, 3, 5):
        for layers in (0, 1, 2, 10):
            for _ in range(8 if n < 5 else 2):
                model = CircuitModel.random(n, layers, rng)
                x = rng.uniform(0, np.pi, size=n)
                exact = expectation_grad(model, x).values
                numeric = finite_diff_grad(_output(model, x), model.theta).values
                tolerance = np.maximum(1e-5, 1e-4 * np.abs(exact))
                assert np.all(np.abs(exact - numeric) <= tolerance)
                checked += 1
    assert checked >= 100


def test_loss_gradient_chain_rule():
    rng = np.random.default_rng(1)
    model = CircuitModel.random(2, 1, rng)
    x, target = np.array([0.5, 1.2]), 0.3
    loss, grad = loss_grad(model, x, target)
    f = float(model.forward(x[None, :])[0])
    assert loss == pytest.approx((f - target) ** 2)
    np.testing.assert_allclose(grad.values, 2 * (f - target) * expectation_grad(model, x).values)


def test_batch_loss_grad_shapes_and_mismatch():
    model = CircuitModel(2, 1)
    X = np.zeros((3, 2))
    losses, grads = batch_loss_grad(model, X, np.zeros(3))
    assert losses.shape == (3,) and grads.shape == (3, model.n_params)
    with pytest.raises(DimensionError):
        batch_loss_grad(model, X, np.zeros(2))


def test_gradient_vector_helpers():
    model = CircuitModel(1, 0)
    grad = expectation_grad(model, [0.2])
    assert len(grad) == 3
    assert grad.is_finite()
    assert grad.norm() >= 0


def test_finite_diff_rejects_non_positive_step():
    with pytest.raises(ArgumentError):
        finite_diff_grad(lambda t: 0.0, [0.0], h=0.0)


@pytest.mark.parametrize("layers", [0, 1])
def test_rotations_outside_the_readout_light_cone_have_zero_gradient(layers):
    rng = np.random.default_rng(2)
    model = CircuitModel.random(2, layers, rng)
    grad = expectation_grad(model, rng.uniform(0, np.pi, size=2)).values
    # the trailing Rot on qubit 1 never reaches the qubit-0 readout
    last = 3 * (layers * 2 + 1)
    np.testing.assert_allclose(grad[last : last + 3], 0.0, atol=1e-14)
    assert np.max(np.abs(grad[last - 3 : last])) > 1e-6


def test_loss_gradient_is_linear_in_the_residual():
    rng = np.random.default_rng(3)
    model = CircuitModel.random(3, 2, rng)
    x = rng.uniform(0, np.pi, size=3)
    f = float(model.forward(x[None, :])[0])
    _, base = loss_grad(model, x, f - 0.2)
    _, doubled = loss_grad(model, x, f - 0.4)
    _, flipped = loss_grad(model, x, f + 0.2)
    np.testing.assert_allclose(doubled.values, 2.0 * base.values, rtol=1e-12, atol=1e-15)
    np.testing.assert_allclose(flipped.values, -base.values, rtol=1e-12, atol=1e-15)
    _, at_target = loss_grad(model, x, f)
    np.testing.assert_allclose(at_target.values, 0.0, atol=1e-12)
