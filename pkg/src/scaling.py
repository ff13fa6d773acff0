"""
Min-max scaling shared by the quantum and classical regressors

Features are mapped to the encoding range of each model ([0, pi] for angle
encoding, [-1, 1] for the MLP); targets always live in [-1, 1] so that a
Pauli-Z expectation can represent them directly.
"""

from typing import Any, Dict, Sequence, Tuple

import numpy as np

from src.exceptions import DimensionError

ANGLE_RANGE: Tuple[float, float] = (0.0, float(np.pi))
SYMMETRIC_RANGE: Tuple[float, float] = (-1.0, 1.0)


class Scaling:
    """
    Training-set statistics for features and the scalar target
    """

    def __init__(
        self,
        feature_min: Sequence[float],
        feature_max: Sequence[float],
        target_min: float,
        target_max: float,
    ):
        self.feature_min = np.asarray(feature_min, dtype=float)
        self.feature_max = np.asarray(feature_max, dtype=float)
        if self.feature_min.shape != self.feature_max.shape:
            raise DimensionError("feature_min and feature_max must have the same length")
        self.target_min = float(target_min)
        self.target_max = float(target_max)

    @classmethod
    def fit(cls, X: np.ndarray, y: np.ndarray) -> "Scaling":
        X = np.atleast_2d(np.asarray(X, dtype=float))
        y = np.asarray(y, dtype=float)
        return cls(X.min(axis=0), X.max(axis=0), float(y.min()), float(y.max()))

    @property
    def n_features(self) -> int:
        return int(self.feature_min.size)

    def transform_features(self, X: np.ndarray, out_range: Tuple[float, float] = ANGLE_RANGE) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != self.n_features:
            raise DimensionError(f"expected {self.n_features} features, got {X.shape[-1]}")
        span = self.feature_max - self.feature_min
        # constant columns map to the lower end of the range
        span = np.where(span > 0, span, 1.0)
        unit = np.clip((X - self.feature_min) / span, 0.0, 1.0)
        lo, hi = out_range
        return lo + unit * (hi - lo)

    def transform_target(self, y: np.ndarray) -> np.ndarray:
        span = self.target_max - self.target_min
        if span <= 0:
            return np.zeros_like(np.asarray(y, dtype=float))
        return 2.0 * (np.asarray(y, dtype=float) - self.target_min) / span - 1.0

    def inverse_target(self, y_scaled: np.ndarray) -> np.ndarray:
        span = self.target_max - self.target_min
        return self.target_min + (np.asarray(y_scaled, dtype=float) + 1.0) * 0.5 * span

    def to_dict(self) -> Dict[str, Any]:
        return {
            "feature_scale": {"min": self.feature_min.tolist(), "max": self.feature_max.tolist()},
            "target_scale": {"min": self.target_min, "max": self.target_max},
        }

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> "Scaling":
        return cls(
            payload["feature_scale"]["min"],
            payload["feature_scale"]["max"],
            payload["target_scale"]["min"],
            payload["target_scale"]["max"],
        )
