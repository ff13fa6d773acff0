"""
Tests for min-max feature and target scaling
"""

import numpy as np
import pytest

from src.exceptions import DimensionError
from src.scaling import ANGLE_RANGE, SYMMETRIC_RANGE, Scaling


@pytest.fixture
def scaling():
    X = np.array([[0.0, 10.0], [2.0, 30.0], [1.0, 20.0]])
    y = np.array([12.5, 12.7, 12.6])
    return Scaling.fit(X, y)


def test_features_map_to_the_requested_range(scaling):
    X = np.array([[0.0, 10.0], [2.0, 30.0], [1.0, 20.0]])
    np.testing.assert_allclose(scaling.transform_features(X, ANGLE_RANGE)[:, 0], [0.0, np.pi, np.pi / 2])
    np.testing.assert_allclose(scaling.transform_features(X, SYMMETRIC_RANGE)[:, 1], [-1.0, 1.0, 0.0])


def test_out_of_range_features_are_clipped(scaling):
    out = scaling.transform_features(np.array([[-5.0, 100.0]]), ANGLE_RANGE)
    np.testing.assert_allclose(out, [[0.0, np.pi]])


def test_constant_column_maps_to_lower_end():
    scaling = Scaling.fit(np.array([[1.0, 3.0], [2.0, 3.0]]), np.array([0.0, 1.0]))
    out = scaling.transform_features(np.array([[1.5, 3.0]]), SYMMETRIC_RANGE)
    assert out[0, 1] == -1.0


def test_target_round_trip(scaling):
    y = np.array([12.5, 12.55, 12.7])
    scaled = scaling.transform_target(y)
    assert scaled[0] == pytest.approx(-1.0) and scaled[-1] == pytest.approx(1.0)
    np.testing.assert_allclose(scaling.inverse_target(scaled), y)


def test_constant_target_scales_to_zero():
    scaling = Scaling.fit(np.zeros((3, 1)), np.full(3, 4.0))
    np.testing.assert_array_equal(scaling.transform_target(np.full(3, 4.0)), np.zeros(3))
    assert scaling.inverse_target(0.0) == pytest.approx(4.0)


def test_feature_width_checked(scaling):
    with pytest.raises(DimensionError):
        scaling.transform_features(np.zeros((1, 3)))
    with pytest.raises(DimensionError):
        Scaling([0.0, 1.0], [1.0], 0.0, 1.0)


def test_document_form(scaling):
    payload = scaling.to_dict()
    assert payload["target_scale"] == {"min": 12.5, "max": 12.7}
    restored = Scaling.from_dict(payload)
    np.testing.assert_array_equal(restored.feature_max, scaling.feature_max)
