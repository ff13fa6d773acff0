"""
Tests for the experiment drivers, on small circuits and the four-bus grid,
plus slow reproduction checks on the 33-bus feeder
"""

import math

import numpy as np
import pytest

from src.baseline_mlp import MLPModel, parameter_count
from src.config import ExperimentConfig
from src.data_processor import write_json
from src.exceptions import ConfigurationError, SchemaError
from src.experiments import (
    accountant_report,
    classical_forward_time,
    error_percentage,
    evaluate_model,
    fit_circuit,
    fit_mlp,
    load_model,
    mean_sample,
    provenance,
    quantum_time,
    quantum_time_for_depth,
    run_figure3_experiment,
    run_loss_trace_experiment,
    run_table2_experiment,
    run_table3_experiment,
    sigma_label,
    split_dataset,
)
from src.quantum_core import CircuitModel, circuit_depth
from src.scaling import Scaling
from src.schemas import DistributionSpec, RunConfig, TimingModel
from src.uncertainty import build_dataset


@pytest.fixture
def voltage_model():
    """Random 1-layer circuit scaled to the four-bus feature and voltage ranges"""
    scaling = Scaling(np.zeros(5), np.full(5, 0.3), 0.95, 1.0)
    return CircuitModel.random(5, 1, np.random.default_rng(0), scaling=scaling)


def test_quantum_time_model():
    assert quantum_time_for_depth(0) == pytest.approx(1e-6)
    assert quantum_time_for_depth(76) == pytest.approx(1.76e-6)
    timing = TimingModel(prep_measure_seconds=0.0, gate_seconds=1.0)
    model = CircuitModel(2, 1)
    assert quantum_time(model, timing) == circuit_depth(model)


def test_default_architectures_parameter_counts():
    assert CircuitModel(5, 10).n_params == 165
    assert parameter_count([5, 32, 32, 1]) == 1281


def test_error_percentage():
    assert error_percentage(101.0, 100.0) == pytest.approx(1.0)
    assert error_percentage(99.0, 100.0) == pytest.approx(1.0)
    assert error_percentage(0.0, 0.0) == 0.0
    assert math.isinf(error_percentage(1.0, 0.0))


def test_split_dataset(regression_data):
    X, y = regression_data
    X_train, y_train, X_test, y_test = split_dataset(X, y, 0.25, np.random.default_rng(0))
    assert X_train.shape == (48, 5) and X_test.shape == (16, 5)
    assert len(y_train) == 48 and len(y_test) == 16
    combined = np.sort(np.concatenate([y_train, y_test]))
    np.testing.assert_array_equal(combined, np.sort(y))


def test_fit_and_evaluate_both_models(regression_data, tiny_config):
    X, y = regression_data
    qnn = fit_circuit(X, y, tiny_config, sigma=1.0, seed=0)
    mlp = fit_mlp(X, y, tiny_config, sigma=1.0, seed=0)
    assert qnn.status == "finished" and mlp.status == "finished"
    assert qnn.model.n_params == 30
    assert mlp.model.n_params == parameter_count([5, 4, 1])
    assert qnn.spend is not None and set(qnn.spend_by_reading) == {"epochs", "steps"}
    for result in (qnn, mlp):
        metrics = evaluate_model(result.model, X, y)
        assert set(metrics) == {"r2", "rmse", "mae"}
        assert np.isfinite(metrics["rmse"]) and metrics["mae"] <= metrics["rmse"]


def test_fit_is_seed_deterministic(regression_data, tiny_config):
    X, y = regression_data
    a = fit_circuit(X, y, tiny_config, sigma=2.0, seed=4)
    b = fit_circuit(X, y, tiny_config, sigma=2.0, seed=4)
    np.testing.assert_array_equal(a.model.params, b.model.params)


def test_evaluate_constant_targets(voltage_model):
    X = np.full((3, 5), 0.1)
    metrics = evaluate_model(voltage_model, X, np.full(3, 0.97))
    assert math.isnan(metrics["r2"])
    assert np.isfinite(metrics["rmse"])


def test_load_model_dispatch(tmp_path, voltage_model):
    write_json(tmp_path / "q.json", voltage_model.to_dict())
    mlp = MLPModel.random(np.random.default_rng(1), (5, 3, 1), voltage_model.scaling)
    write_json(tmp_path / "m.json", mlp.to_dict())
    loaded_q = load_model(tmp_path / "q.json")
    loaded_m = load_model(tmp_path / "m.json")
    assert isinstance(loaded_q, CircuitModel) and isinstance(loaded_m, MLPModel)
    np.testing.assert_array_equal(loaded_q.params, voltage_model.params)

    write_json(tmp_path / "bad.json", {"weights": []})
    with pytest.raises(SchemaError):
        load_model(tmp_path / "bad.json")


def test_mean_sample(four_bus_grid, small_spec):
    sample = mean_sample(four_bus_grid, small_spec)
    assert sample.wind == (0.1, 0.1)
    assert sample.solar == pytest.approx((0.1 * 2 / 7, 0.1 * 2 / 7))
    assert sample.load_perturbation == 0.0


def test_figure3_trace(four_bus_grid, small_spec, voltage_model):
    frame = run_figure3_experiment(
        four_bus_grid, {0.0: voltage_model, 5.0: voltage_model}, small_spec, [0.0, 5.0],
        target_bus=4, t_max=3, shots=50, repeats=4, rng=np.random.default_rng(0),
    )
    assert len(frame) == 4
    assert {"t", "load", "v_opf", "v_sigma0_mean", "v_sigma0_std", "v_sigma5_mean", "v_sigma5_std"} <= set(frame)
    assert frame["load"].iloc[0] == pytest.approx(0.2 * 0.7)
    assert frame["v_opf"].between(0.9, 1.1).all()
    assert frame["v_sigma0_mean"].between(0.95 - 0.05, 1.0 + 0.05).all()
    assert (frame["v_sigma5_std"] >= 0).all()


def test_figure3_requires_every_sigma(four_bus_grid, small_spec, voltage_model):
    with pytest.raises(ConfigurationError):
        run_figure3_experiment(four_bus_grid, {0.0: voltage_model}, small_spec, [0.0, 1.0], target_bus=4, t_max=1)


def test_table2_rows(four_bus_grid, small_spec, voltage_model):
    frame = run_table2_experiment(
        four_bus_grid, {1.0: voltage_model}, small_spec, target_bus=4, n_samples=6, rng=np.random.default_rng(2)
    )
    assert list(frame["source"]) == ["monte_carlo", "qnn"]
    reference, qnn = frame.iloc[0], frame.iloc[1]
    assert reference["n_total"] == 6 and reference["n_feasible"] == 6
    assert qnn["sigma"] == 1.0
    assert qnn["error_mean_pct"] == pytest.approx(error_percentage(qnn["mean"], reference["mean"]))


def test_table3_rows_and_aggregate(regression_data, tiny_config):
    X, y = regression_data
    rows, aggregate = run_table3_experiment(X, y, tiny_config, sigmas=[0.0, 1.0], seeds=[0], epochs=1)
    assert len(rows) == 4
    assert set(rows["model"]) == {"qnn", "mlp"}
    qnn_rows = rows[rows["model"] == "qnn"]
    assert (qnn_rows["time_kind"] == "analytic").all()
    assert qnn_rows["time_seconds"].iloc[0] == pytest.approx(quantum_time_for_depth(circuit_depth(CircuitModel(5, 1))))
    assert (rows[rows["model"] == "mlp"]["time_kind"] == "measured").all()
    assert len(aggregate) == 4
    assert (aggregate["r2_std"] == 0.0).all()
    assert (aggregate["aborted"] == 0).all()


def test_loss_trace(regression_data, tiny_config):
    X, y = regression_data
    trace = run_loss_trace_experiment(X, y, tiny_config, sigma=1.0, seed=0, epochs=1)
    assert list(trace.columns) == ["step", "qnn_loss", "mlp_loss"]
    assert len(trace) == 64 // 8
    assert trace[["qnn_loss", "mlp_loss"]].notna().all().all()


def test_accountant_report():
    report = accountant_report(1.0, 1e-5, 32, 1000, 10, 1e-5)
    assert set(report) == {"epochs", "steps"}
    assert report["steps"].steps == 10 * (1000 // 32)
    assert report["steps"].composed_epsilon > report["epochs"].composed_epsilon


def test_accountant_report_rejects_bad_arguments():
    with pytest.raises(ConfigurationError):
        accountant_report(1.0, 1e-5, 64, 32, 10, 1e-5)
    with pytest.raises(ConfigurationError):
        accountant_report(-1.0, 1e-5, 32, 1000, 10, 1e-5)


def test_provenance_records_run_config():
    record = provenance(RunConfig(command="popf", seed=3))
    assert record["run_config"]["seed"] == 3
    assert isinstance(record["git"], str) and record["version"]


def test_analytic_circuit_time_beats_measured_mlp_forward():
    scaling = Scaling(np.zeros(5), np.ones(5), 12.0, 13.0)
    mlp = MLPModel.random(np.random.default_rng(0), (5, 32, 32, 1), scaling)
    measured = classical_forward_time(mlp, mlp.encode_features(np.full((1, 5), 0.5)), repeats=200)
    assert quantum_time(CircuitModel(5, 10)) < measured


# Reproduction checks on the 33-bus feeder. Short training runs stand in for
# the full 1000-epoch schedule, so the thresholds are the smoke-scale ones.

REPRO_SEEDS = (0, 1)
REPRO_SIGMAS = (0.0, 1.0, 5.0, 10.0)


@pytest.fixture(scope="module")
def ieee33_dataset(ieee33):
    grid = ieee33
    spec = DistributionSpec()
    X, y = build_dataset(grid, spec, 400, target_bus=30, rng=np.random.default_rng(11))
    return grid, spec, X, y


@pytest.fixture(scope="module")
def repro_circuits(ieee33_dataset):
    """Circuits trained on the full dataset, keyed by (sigma, seed)"""
    _, _, X, y = ieee33_dataset
    cfg = ExperimentConfig()
    return {
        (sigma, seed): fit_circuit(X, y, cfg, sigma, seed, epochs=40).model
        for sigma in REPRO_SIGMAS
        for seed in REPRO_SEEDS
    }


@pytest.mark.slow
def test_table2_statistics_on_ieee33(ieee33_dataset, repro_circuits):
    grid, spec, _, _ = ieee33_dataset
    errors = {sigma: [] for sigma in REPRO_SIGMAS}
    for seed in REPRO_SEEDS:
        models = {sigma: repro_circuits[(sigma, seed)] for sigma in REPRO_SIGMAS}
        frame = run_table2_experiment(grid, models, spec, 30, n_samples=300, rng=np.random.default_rng(seed))
        reference = frame.iloc[0]
        assert reference["mean"] == pytest.approx(12.6592, rel=5e-3)
        qnn = frame[frame["source"] == "qnn"].set_index("sigma")
        # 0.01% needs the full schedule; 40 epochs settle within 0.05%
        assert qnn.loc[0.0, "error_mean_pct"] <= 0.05
        for sigma in REPRO_SIGMAS:
            errors[sigma].append(qnn.loc[sigma, "error_std_pct"])
    spread = {sigma: float(np.mean(values)) for sigma, values in errors.items()}
    assert spread[0.0] < 10.0
    assert spread[0.0] < spread[5.0]
    assert spread[0.0] < spread[10.0]


@pytest.mark.slow
def test_table3_ordering_on_ieee33(ieee33_dataset):
    _, _, X, y = ieee33_dataset
    rows, aggregate = run_table3_experiment(
        X, y, ExperimentConfig(), sigmas=[0.0, 5.0], seeds=[0], epochs=60, timing_repeats=200
    )
    r2 = aggregate.set_index(["sigma", "model"])["r2_mean"]
    assert r2[(0.0, "qnn")] >= 0.95
    assert r2[(0.0, "mlp")] >= 0.9
    assert r2[(5.0, "qnn")] > r2[(5.0, "mlp")]
    assert set(rows["status"]) <= {"finished", "aborted"}
    assert dict(aggregate.groupby("model")["n_params"].first()) == {"mlp": 1281, "qnn": 165}


@pytest.mark.slow
def test_private_runs_end_in_structured_outcomes(ieee33_dataset):
    _, _, X, y = ieee33_dataset
    cfg = ExperimentConfig()
    for sigma in (1.0, 2.0, 5.0):
        qnn = fit_circuit(X, y, cfg, sigma, seed=0, epochs=5)
        assert qnn.status == "finished"
        assert np.isfinite(qnn.step_losses).all()
        mlp = fit_mlp(X, y, cfg, sigma, seed=0, epochs=5)
        assert mlp.status in {"finished", "aborted"}
        if mlp.status == "aborted":
            assert mlp.diagnostic is not None
        else:
            assert np.isfinite(mlp.step_losses).all()


@pytest.mark.slow
def test_figure3_reverse_pattern_and_damping(ieee33_dataset, repro_circuits):
    grid, spec, _, _ = ieee33_dataset
    variances = {0.0: [], 10.0: []}
    for seed in REPRO_SEEDS:
        models = {sigma: repro_circuits[(sigma, seed)] for sigma in variances}
        frame = run_figure3_experiment(
            grid, models, spec, list(variances), target_bus=30, t_max=250,
            shots=2000, repeats=10, rng=np.random.default_rng(seed),
        )
        assert np.corrcoef(frame["load"], frame["v_opf"])[0, 1] < -0.5
        assert np.corrcoef(frame["load"], frame["v_sigma0_mean"])[0, 1] < -0.5
        for sigma in variances:
            variances[sigma].append(frame[f"v_sigma{sigma_label(sigma)}_mean"].var())
    assert np.mean(variances[10.0]) < np.mean(variances[0.0])
