"""
Classical MLP baseline with hand-written backpropagation

Per-sample gradients are needed for clipping, so forward and backward passes
are batched numpy code rather than a framework autograd. Parameters are
flattened layer by layer as [W_1 (row-major, out x in), b_1, W_2, b_2, ...].
"""

import logging
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from sklearn.metrics import r2_score

from src.exceptions import ConfigurationError, DimensionError, UndefinedMetricError
from src.gradients import GradientVector
from src.scaling import SYMMETRIC_RANGE, Scaling

logger = logging.getLogger(__name__)

DEFAULT_LAYER_SIZES = (5, 32, 32, 1)


def parameter_count(layer_sizes: Sequence[int]) -> int:
    return int(sum(fan_in * fan_out + fan_out for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:])))


class MLPModel:
    """
    Fully connected regressor, tanh on hidden layers and identity output
    """

    def __init__(
        self,
        layer_sizes: Sequence[int] = DEFAULT_LAYER_SIZES,
        params: Optional[np.ndarray] = None,
        scaling: Optional[Scaling] = None,
    ):
        self.layer_sizes = tuple(int(s) for s in layer_sizes)
        if len(self.layer_sizes) < 2 or min(self.layer_sizes) < 1:
            raise ConfigurationError(f"invalid layer sizes {self.layer_sizes}")
        if self.layer_sizes[-1] != 1:
            raise ConfigurationError("the output layer must have a single unit")
        self.scaling = scaling
        size = parameter_count(self.layer_sizes)
        self._params = np.zeros(size) if params is None else np.asarray(params, dtype=float).copy()
        if self._params.shape != (size,):
            raise DimensionError(f"expected {size} parameters, got {self._params.size}")

    @classmethod
    def random(
        cls,
        rng: np.random.Generator,
        layer_sizes: Sequence[int] = DEFAULT_LAYER_SIZES,
        scaling: Optional[Scaling] = None,
    ) -> "MLPModel":
        """Weights and biases uniform in [-sqrt(1/fan_in), sqrt(1/fan_in)]"""
        chunks = []
        for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
            bound = np.sqrt(1.0 / fan_in)
            chunks.append(rng.uniform(-bound, bound, size=fan_in * fan_out + fan_out))
        return cls(layer_sizes, np.concatenate(chunks), scaling)

    @property
    def params(self) -> np.ndarray:
        return self._params

    @property
    def n_params(self) -> int:
        return int(self._params.size)

    def with_params(self, params: np.ndarray) -> "MLPModel":
        return MLPModel(self.layer_sizes, params, self.scaling)

    def layers(self) -> List[Tuple[np.ndarray, np.ndarray]]:
        out, offset = [], 0
        for fan_in, fan_out in zip(self.layer_sizes[:-1], self.layer_sizes[1:]):
            W = self._params[offset : offset + fan_in * fan_out].reshape(fan_out, fan_in)
            offset += fan_in * fan_out
            b = self._params[offset : offset + fan_out]
            offset += fan_out
            out.append((W, b))
        return out

    def _activations(self, X: np.ndarray) -> List[np.ndarray]:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.layer_sizes[0]:
            raise DimensionError(f"expected {self.layer_sizes[0]} features, got {X.shape[1]}")
        acts = [X]
        layers = self.layers()
        for depth, (W, b) in enumerate(layers):
            z = acts[-1] @ W.T + b
            acts.append(z if depth == len(layers) - 1 else np.tanh(z))
        return acts

    def forward(self, X: np.ndarray) -> np.ndarray:
        """Outputs in the scaled target space for scaled inputs, shape (M,)"""
        return self._activations(X)[-1][:, 0]

    def loss_and_grads(self, X: np.ndarray, y: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """
        Per-sample squared error and its gradient

        Returns:
            (losses (M,), gradients (M, n_params)) in the flattening order
        """
        acts = self._activations(X)
        y = np.asarray(y, dtype=float).ravel()
        if y.size != acts[0].shape[0]:
            raise DimensionError(f"{acts[0].shape[0]} inputs but {y.size} targets")
        residual = acts[-1][:, 0] - y
        layers = self.layers()

        delta = 2.0 * residual[:, None]
        blocks: List[np.ndarray] = []
        for depth in range(len(layers) - 1, -1, -1):
            W, _ = layers[depth]
            grad_W = delta[:, :, None] * acts[depth][:, None, :]
            blocks.append(delta)
            blocks.append(grad_W.reshape(grad_W.shape[0], -1))
            if depth > 0:
                delta = (delta @ W) * (1.0 - acts[depth] ** 2)
        grads = np.concatenate(blocks[::-1], axis=1)
        return residual ** 2, grads

    def encode_features(self, X_raw: np.ndarray) -> np.ndarray:
        if self.scaling is None:
            raise ConfigurationError("model has no feature scaling attached")
        return self.scaling.transform_features(X_raw, SYMMETRIC_RANGE)

    def predict(self, X_raw: np.ndarray) -> np.ndarray:
        encoded = self.encode_features(X_raw)
        return self.scaling.inverse_target(self.forward(encoded))

    def to_dict(self) -> Dict[str, Any]:
        layers = self.layers()
        return {
            "layer_sizes": list(self.layer_sizes),
            "weights": [W.tolist() for W, _ in layers],
            "biases": [b.tolist() for _, b in layers],
            "scaling": self.scaling.to_dict() if self.scaling is not None else None,
        }

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> "MLPModel":
        chunks = []
        for W, b in zip(payload["weights"], payload["biases"]):
            chunks.append(np.asarray(W, dtype=float).ravel())
            chunks.append(np.asarray(b, dtype=float).ravel())
        scaling = Scaling.from_dict(payload["scaling"]) if payload.get("scaling") else None
        return cls(payload["layer_sizes"], np.concatenate(chunks), scaling)


def mlp_forward(model: MLPModel, x: Sequence[float]) -> float:
    return float(model.forward(np.asarray(x, dtype=float)[None, :])[0])


def mlp_backward(model: MLPModel, x: Sequence[float], y_star: float) -> GradientVector:
    _, grads = model.loss_and_grads(np.asarray(x, dtype=float)[None, :], np.array([y_star]))
    return GradientVector(grads[0])


def r_squared(predictions: np.ndarray, truths: np.ndarray) -> float:
    """Coefficient of determination; negative when worse than the mean predictor"""
    predictions = np.asarray(predictions, dtype=float).ravel()
    truths = np.asarray(truths, dtype=float).ravel()
    if predictions.size != truths.size:
        raise DimensionError(f"{predictions.size} predictions for {truths.size} truths")
    if truths.size < 2:
        raise UndefinedMetricError("R^2 needs at least two points")
    if np.ptp(truths) == 0:
        raise UndefinedMetricError("R^2 is undefined for constant truths")
    return float(r2_score(truths, predictions))
