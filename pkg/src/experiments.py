"""
Experiment drivers behind the CLI subcommands

Each driver returns pandas DataFrames or plain dicts; main.py writes them.
"""

import logging
import math
import subprocess
import time
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import ValidationError
from tqdm import tqdm

from src import __version__
from src.accountant import privacy_report
from src.baseline_mlp import MLPModel, r_squared
from src.config import ExperimentConfig
from src.data_processor import read_json
from src.dp_optimizer import TrainingResult, rng_streams, run_training
from src.exceptions import ConfigurationError, SchemaError, UndefinedMetricError
from src.grid import GridModel, UncertainSample
from src.opf_solver import solve_opf
from src.quantum_core import CircuitModel, circuit_depth
from src.scaling import ANGLE_RANGE, SYMMETRIC_RANGE, Scaling
from src.schemas import DistributionSpec, DPConfig, PrivacySpend, RunConfig, TimingModel
from src.uncertainty import load_pattern, monte_carlo_popf

logger = logging.getLogger(__name__)

Model = Union[CircuitModel, MLPModel]


def quantum_time_for_depth(depth: int, timing: TimingModel = TimingModel()) -> float:
    """T = (T_p + T_M) + T_G * D"""
    return timing.prep_measure_seconds + timing.gate_seconds * depth


def quantum_time(model: CircuitModel, timing: TimingModel = TimingModel()) -> float:
    return quantum_time_for_depth(circuit_depth(model), timing)


def classical_forward_time(model: MLPModel, x: np.ndarray, repeats: int) -> float:
    """Median wall-clock time of a single-sample forward pass"""
    x = np.atleast_2d(x)
    samples = np.empty(repeats)
    for i in range(repeats):
        start = time.perf_counter()
        model.forward(x)
        samples[i] = time.perf_counter() - start
    return float(np.median(samples))


def sigma_label(sigma: float) -> str:
    return f"{sigma:g}"


def git_describe() -> str:
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            capture_output=True, text=True, timeout=5, cwd=Path(__file__).resolve().parent,
        )
    except (OSError, subprocess.SubprocessError):
        return "unknown"
    return out.stdout.strip() if out.returncode == 0 and out.stdout.strip() else "unknown"


def provenance(run_config: RunConfig) -> Dict[str, Any]:
    return {"run_config": run_config.model_dump(), "version": __version__, "git": git_describe()}


def split_dataset(
    X: np.ndarray, y: np.ndarray, test_fraction: float, rng: np.random.Generator
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    order = rng.permutation(len(y))
    n_test = max(1, int(round(test_fraction * len(y))))
    test, train = order[:n_test], order[n_test:]
    return X[train], y[train], X[test], y[test]


def fit_circuit(
    X: np.ndarray,
    y: np.ndarray,
    cfg: ExperimentConfig,
    sigma: float,
    seed: int,
    epochs: Optional[int] = None,
    progress: bool = False,
) -> TrainingResult:
    """Scale raw features/targets, initialize a circuit from the seed and train it"""
    scaling = Scaling.fit(X, y)
    streams = rng_streams(seed)
    model = CircuitModel.random(
        cfg.n_qubits, cfg.n_layers, streams.init, entangle_range=cfg.entangle_range, scaling=scaling
    )
    data = (scaling.transform_features(X, ANGLE_RANGE), scaling.transform_target(y))
    return run_training(data, model, cfg.dp_config(sigma, seed, epochs), progress=progress)


def fit_mlp(
    X: np.ndarray,
    y: np.ndarray,
    cfg: ExperimentConfig,
    sigma: float,
    seed: int,
    epochs: Optional[int] = None,
    progress: bool = False,
) -> TrainingResult:
    scaling = Scaling.fit(X, y)
    streams = rng_streams(seed)
    sizes = [X.shape[1]] + list(cfg.mlp_hidden) + [1]
    model = MLPModel.random(streams.init, sizes, scaling)
    data = (scaling.transform_features(X, SYMMETRIC_RANGE), scaling.transform_target(y))
    return run_training(data, model, cfg.dp_config(sigma, seed, epochs), progress=progress)


def evaluate_model(model: Model, X: np.ndarray, y: np.ndarray) -> Dict[str, float]:
    """R^2, RMSE and MAE in physical units; non-finite predictions give NaN metrics"""
    predictions = model.predict(X)
    if not np.all(np.isfinite(predictions)):
        return {"r2": math.nan, "rmse": math.nan, "mae": math.nan}
    residual = predictions - y
    try:
        r2 = r_squared(predictions, y)
    except UndefinedMetricError:
        r2 = math.nan
    return {
        "r2": r2,
        "rmse": float(np.sqrt(np.mean(residual ** 2))),
        "mae": float(np.mean(np.abs(residual))),
    }


def load_model(path: Union[str, Path]) -> Model:
    payload = read_json(path)
    try:
        if "layer_sizes" in payload:
            return MLPModel.from_dict(payload)
        return CircuitModel.from_dict(payload)
    except (KeyError, TypeError) as exc:
        raise SchemaError(f"{path} is not a model document: {exc}") from exc


def mean_sample(grid: GridModel, spec: DistributionSpec) -> UncertainSample:
    """Renewables at their distribution means (capped), no load perturbation"""
    wind_mean = spec.wind_scale * math.gamma(1.0 + 1.0 / spec.wind_shape)
    if spec.wind_capacity is not None:
        wind_mean = min(wind_mean, spec.wind_capacity)
    solar_mean = spec.solar_a / (spec.solar_a + spec.solar_b)
    if spec.solar_capacity is not None:
        solar_mean *= spec.solar_capacity
    return UncertainSample(
        wind=tuple(wind_mean for _ in grid.placements.wt),
        solar=tuple(solar_mean for _ in grid.placements.pv),
        load_perturbation=0.0,
    )


def run_figure3_experiment(
    grid: GridModel,
    models: Mapping[float, CircuitModel],
    spec: DistributionSpec,
    sigmas: Iterable[float],
    target_bus: int,
    t_max: int = 400,
    load_scale: float = 0.2,
    shots: int = 100,
    repeats: int = 10,
    rng: Optional[np.random.Generator] = None,
    progress: bool = False,
) -> pd.DataFrame:
    """
    Voltage traces under the periodic customer load

    For every timestep the customer's nominal demand is load_scale * p(t); the
    OPF voltage at the target bus is compared with each model's shot-based
    prediction (mean and std over `repeats` estimates of `shots` shots).

    Returns:
        DataFrame with columns t, load, v_opf, v_sigma{s}_mean, v_sigma{s}_std
    """
    sigmas = list(sigmas)
    missing = [s for s in sigmas if s not in models]
    if missing:
        raise ConfigurationError(f"no trained model for sigma {missing}")
    rng = rng or np.random.default_rng(0)
    base = mean_sample(grid, spec)

    rows = []
    for t in tqdm(range(t_max + 1), desc="timesteps", disable=not progress, leave=False):
        load = load_scale * load_pattern(t)
        solution = solve_opf(grid.with_customer_load(load), base)
        x = np.array(list(base.wind) + list(base.solar) + [load])[None, :]
        row = {"t": t, "load": load, "v_opf": solution.voltage_kv(target_bus)}
        for sigma in sigmas:
            mean, std = models[sigma].predict_shots(x, shots, repeats, rng)
            row[f"v_sigma{sigma_label(sigma)}_mean"] = float(mean[0])
            row[f"v_sigma{sigma_label(sigma)}_std"] = float(std[0])
        rows.append(row)
    return pd.DataFrame(rows)


def error_percentage(estimate: float, reference: float) -> float:
    """|est - ref| / ref * 100"""
    if reference == 0:
        return 0.0 if estimate == 0 else math.inf
    return abs(estimate - reference) / abs(reference) * 100.0


def run_table2_experiment(
    grid: GridModel,
    models: Mapping[float, CircuitModel],
    spec: DistributionSpec,
    target_bus: int,
    n_samples: int = 1000,
    rng: Optional[np.random.Generator] = None,
    progress: bool = False,
) -> pd.DataFrame:
    """
    Monte Carlo reference statistics of the target voltage against the
    statistics of each model's predictions on the same samples
    """
    rng = rng or np.random.default_rng(0)
    popf = monte_carlo_popf(grid, spec, n_samples, rng, progress=progress)
    reference = popf.stats[f"V_kv_{target_bus}"]
    rows = [{
        "source": "monte_carlo", "sigma": math.nan, "mean": reference.mean, "std": reference.std,
        "error_mean_pct": 0.0, "error_std_pct": 0.0, "n_feasible": popf.n_feasible, "n_total": popf.n_total,
    }]
    for sigma in sorted(models):
        predictions = models[sigma].predict(popf.features)
        mean = float(np.mean(predictions))
        std = float(np.std(predictions, ddof=1)) if predictions.size > 1 else 0.0
        rows.append({
            "source": "qnn",
            "sigma": sigma,
            "mean": mean,
            "std": std,
            "error_mean_pct": error_percentage(mean, reference.mean),
            "error_std_pct": error_percentage(std, reference.std),
            "n_feasible": popf.n_feasible,
            "n_total": popf.n_total,
        })
    return pd.DataFrame(rows)


def run_table3_experiment(
    X: np.ndarray,
    y: np.ndarray,
    cfg: ExperimentConfig,
    sigmas: Iterable[float],
    seeds: Iterable[int],
    epochs: Optional[int] = None,
    timing: Optional[TimingModel] = None,
    timing_repeats: Optional[int] = None,
    progress: bool = False,
) -> Tuple[pd.DataFrame, pd.DataFrame]:
    """
    QNN vs MLP under the same private training pipeline

    Returns:
        (rows, aggregate): one row per (seed, sigma, model) and the mean/std
        of R^2 over seeds per (sigma, model)
    """
    timing = timing or cfg.timing_model()
    repeats = timing_repeats or cfg.timing_repeats
    rows: List[Dict[str, Any]] = []
    for seed in seeds:
        X_train, y_train, X_test, y_test = split_dataset(X, y, cfg.test_fraction, np.random.default_rng(seed))
        for sigma in sigmas:
            logger.info(f"Benchmark run: seed={seed}, sigma={sigma}")
            qnn = fit_circuit(X_train, y_train, cfg, sigma, seed, epochs, progress)
            mlp = fit_mlp(X_train, y_train, cfg, sigma, seed, epochs, progress)
            for name, result in (("qnn", qnn), ("mlp", mlp)):
                model = result.model
                if name == "qnn":
                    seconds, kind = quantum_time(model, timing), "analytic"
                else:
                    x0 = model.encode_features(X_test[:1])
                    seconds, kind = classical_forward_time(model, x0, repeats), "measured"
                rows.append({
                    "seed": seed,
                    "sigma": sigma,
                    "model": name,
                    "n_params": model.n_params,
                    "r2": evaluate_model(model, X_test, y_test)["r2"],
                    "time_seconds": seconds,
                    "time_kind": kind,
                    "status": result.status,
                })
    frame = pd.DataFrame(rows)
    aggregate = (
        frame.groupby(["sigma", "model"], sort=True)
        .agg(r2_mean=("r2", "mean"), r2_std=("r2", "std"), n_params=("n_params", "first"),
             time_seconds=("time_seconds", "median"), aborted=("status", lambda s: int((s == "aborted").sum())))
        .reset_index()
    )
    aggregate["r2_std"] = aggregate["r2_std"].fillna(0.0)
    return frame, aggregate


def run_loss_trace_experiment(
    X: np.ndarray,
    y: np.ndarray,
    cfg: ExperimentConfig,
    sigma: float = 1.0,
    seed: int = 0,
    epochs: Optional[int] = None,
    progress: bool = False,
) -> pd.DataFrame:
    """Per-step training loss of both models; the MLP column is empty after an abort"""
    qnn = fit_circuit(X, y, cfg, sigma, seed, epochs, progress)
    mlp = fit_mlp(X, y, cfg, sigma, seed, epochs, progress)
    steps = max(qnn.step_losses.size, mlp.step_losses.size)
    trace = pd.DataFrame({"step": np.arange(steps)})
    trace["qnn_loss"] = pd.Series(qnn.step_losses, dtype=float)
    trace["mlp_loss"] = pd.Series(mlp.step_losses, dtype=float)
    if mlp.status == "aborted":
        logger.warning(f"MLP training aborted: {mlp.diagnostic}")
    return trace


def accountant_report(
    sigma: float,
    delta: float,
    batch_size: int,
    dataset_size: int,
    epochs: int,
    delta_prime: float,
) -> Dict[str, PrivacySpend]:
    """Spend with T read as epochs and as steps, for the CLI"""
    try:
        config = DPConfig(
            noise_multiplier=sigma,
            per_step_delta=delta,
            batch_size=batch_size,
            dataset_size=dataset_size,
            epochs=epochs,
            composition_delta=delta_prime,
        )
    except ValidationError as exc:
        raise ConfigurationError(f"invalid accountant arguments: {exc}") from exc
    return privacy_report(config)
