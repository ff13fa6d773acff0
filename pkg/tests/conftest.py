"""
Shared fixtures: small per-unit grids, a synthetic regression dataset and the
--runslow switch for the long reproduction checks
"""

import numpy as np
import pytest

from src.config import ExperimentConfig
from src.grid import GridModel, load_grid
from src.schemas import DistributionSpec, GridDocument


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow reproduction tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


def slack_bus(bus_id: int = 1) -> dict:
    return {
        "id": bus_id, "kind": "slack", "pmin": 0.0, "pmax": 10.0,
        "qmin": -10.0, "qmax": 10.0, "cost": 50.0, "vmin": 1.0, "vmax": 1.0,
    }


def two_bus_document(r: float = 0.01, x: float = 0.01, p: float = 1.0, q: float = 0.5) -> dict:
    return {
        "base_kv": 1.0,
        "base_mva": 1.0,
        "slack": 1,
        "units": "pu",
        "buses": [slack_bus(), {"id": 2, "p": p, "q": q, "vmin": 0.9, "vmax": 1.1}],
        "lines": [{"from": 1, "to": 2, "r": r, "x": x}],
        "placements": {"wt": [], "pv": [], "customer": 2},
    }


def three_bus_document(dg_pmax: float = 0.4, dg_qmax: float = 0.0, dg_pmin: float = 0.0) -> dict:
    return {
        "base_kv": 1.0,
        "base_mva": 1.0,
        "slack": 1,
        "units": "pu",
        "buses": [
            slack_bus(),
            {"id": 2, "kind": "dg", "p": 0.2, "q": 0.1, "pmin": dg_pmin, "pmax": dg_pmax,
             "qmin": 0.0, "qmax": dg_qmax, "cost": 30.0, "vmin": 0.9, "vmax": 1.1},
            {"id": 3, "p": 0.8, "q": 0.3, "vmin": 0.9, "vmax": 1.1},
        ],
        "lines": [
            {"from": 1, "to": 2, "r": 0.01, "x": 0.02},
            {"from": 2, "to": 3, "r": 0.02, "x": 0.01},
        ],
        "placements": {"wt": [], "pv": [], "customer": 3},
    }


def four_bus_document() -> dict:
    """Slack feeding a branch point with two laterals; renewables at the lateral ends"""
    return {
        "base_kv": 1.0,
        "base_mva": 1.0,
        "slack": 1,
        "units": "pu",
        "buses": [
            slack_bus(),
            {"id": 2, "p": 0.3, "q": 0.1, "vmin": 0.9, "vmax": 1.1},
            {"id": 3, "p": 0.4, "q": 0.2, "vmin": 0.9, "vmax": 1.1},
            {"id": 4, "p": 0.2, "q": 0.1, "vmin": 0.9, "vmax": 1.1},
        ],
        "lines": [
            {"from": 1, "to": 2, "r": 0.01, "x": 0.01},
            {"from": 2, "to": 3, "r": 0.02, "x": 0.01},
            {"from": 4, "to": 2, "r": 0.01, "x": 0.02},
        ],
        "placements": {"wt": [3, 4], "pv": [3, 4], "customer": 4},
    }


def grid_from(document: dict) -> GridModel:
    return GridModel.from_document(GridDocument.model_validate(document))


@pytest.fixture
def two_bus_grid() -> GridModel:
    return grid_from(two_bus_document())


@pytest.fixture
def three_bus_grid() -> GridModel:
    return grid_from(three_bus_document())


@pytest.fixture
def four_bus_grid() -> GridModel:
    return grid_from(four_bus_document())


@pytest.fixture
def small_spec() -> DistributionSpec:
    """Light renewables and load noise for the four-bus grid"""
    return DistributionSpec(wind_capacity=0.1, solar_capacity=0.1, load_std=0.05, customer_bus=4)


@pytest.fixture(scope="session")
def ieee33():
    return load_grid("ieee33")


@pytest.fixture
def regression_data():
    """Smooth 5-feature target in kV-like units, 64 rows"""
    rng = np.random.default_rng(7)
    X = rng.uniform(0.0, 0.8, size=(64, 5))
    y = 12.6 + 0.02 * np.cos(X[:, 0]) - 0.01 * X[:, 4]
    return X, y


@pytest.fixture
def tiny_config() -> ExperimentConfig:
    """Small circuit and MLP for fast end-to-end runs"""
    return ExperimentConfig(
        n_qubits=5,
        n_layers=1,
        batch_size=8,
        epochs=2,
        mlp_hidden=[4],
        test_fraction=0.25,
        timing_repeats=5,
    )
