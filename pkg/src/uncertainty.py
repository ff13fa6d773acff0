"""
Uncertainty Sampling, Monte Carlo Probabilistic OPF and Dataset Generation

Wind output is Weibull, solar output is Beta scaled by installed capacity and
the customer's demand carries an additive normal perturbation. Each Monte
Carlo sample solves the deterministic OPF; statistics are taken over the
feasible samples.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from tqdm import tqdm

from src.exceptions import (
    AggregationError,
    ConfigurationError,
    DataQualityError,
    DimensionError,
    InfeasibleOPFError,
    SolverConvergenceError,
)
from src.grid import GridModel, UncertainSample
from src.opf_solver import OPFSolution, solve_opf
from src.schemas import DistributionSpec, QuantityStats

logger = logging.getLogger(__name__)


def load_pattern(t):
    """Customer demand multiplier at timestep t"""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ConfigurationError("timestep must be >= 0")
    slow = np.sin(0.05 * t)
    value = np.maximum(slow, 0.7) + 0.05 * slow + 0.025 * np.sin(0.75 * t)
    return float(value) if value.ndim == 0 else value


def draw_injections(
    spec: DistributionSpec,
    rng: np.random.Generator,
    size: int,
    n_wind: int = 2,
    n_solar: int = 2,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Vectorized draws of the uncertain injections

    Returns:
        (wind (size, n_wind), solar (size, n_solar), load perturbation (size,)) in MW
    """
    wind = spec.wind_scale * rng.weibull(spec.wind_shape, size=(size, n_wind))
    wind = np.clip(wind, 0.0, spec.wind_capacity if spec.wind_capacity is not None else np.inf)
    solar = rng.beta(spec.solar_a, spec.solar_b, size=(size, n_solar))
    solar = solar * (spec.solar_capacity if spec.solar_capacity is not None else 1.0)
    load = rng.normal(spec.load_mean, spec.load_std, size=size) + 0.0
    return wind, solar, load


def sample_uncertainty(
    spec: DistributionSpec,
    rng: np.random.Generator,
    n_wind: int = 2,
    n_solar: int = 2,
) -> UncertainSample:
    """
    One draw of the uncertain injections

    Wind and solar are truncated to [0, capacity] (no upper truncation when the
    capacity is None); the load perturbation is returned as drawn and floored
    at zero net demand when applied to the grid.
    """
    wind, solar, load = draw_injections(spec, rng, 1, n_wind, n_solar)
    return UncertainSample(
        wind=tuple(float(w) for w in wind[0]),
        solar=tuple(float(s) for s in solar[0]),
        load_perturbation=float(load[0]),
    )


def _check_customer(grid: GridModel, spec: DistributionSpec) -> None:
    if grid.placements.customer != spec.customer_bus:
        raise ConfigurationError(
            f"distribution customer bus {spec.customer_bus} differs from grid placement {grid.placements.customer}"
        )


def sample_features(grid: GridModel, sample: UncertainSample) -> np.ndarray:
    """(wind..., solar..., customer load) in MW"""
    return np.array(list(sample.wind) + list(sample.solar) + [grid.customer_load_mw(sample)])


@dataclass
class PopfResult:
    stats: Dict[str, QuantityStats]
    n_feasible: int
    n_total: int
    infeasible: List[Tuple[int, str]] = field(default_factory=list)
    records: Optional[pd.DataFrame] = None
    features: Optional[np.ndarray] = None
    solutions: Optional[List[OPFSolution]] = None

    def report(self) -> Dict[str, Dict[str, float]]:
        return {name: s.model_dump() for name, s in self.stats.items()}


def _column_stats(values: np.ndarray) -> Tuple[float, float]:
    mean = float(np.mean(values))
    if values.size < 2 or np.ptp(values) == 0:
        return mean, 0.0
    return mean, float(np.std(values, ddof=1))


def monte_carlo_popf(
    grid: GridModel,
    spec: DistributionSpec,
    n_samples: int,
    rng: np.random.Generator,
    keep_solutions: bool = False,
    progress: bool = False,
) -> PopfResult:
    """
    Probabilistic OPF by sampling

    Args:
        grid: Radial grid
        spec: Distributions of the uncertain injections
        n_samples: Number of scenarios
        rng: Parent generator; each scenario draws from its own spawned child
        keep_solutions: Retain every OPFSolution on the result

    Returns:
        PopfResult with mean and (n-1)-normalized std of every solution quantity

    Raises:
        AggregationError: no sample was feasible
    """
    if n_samples < 1:
        raise ConfigurationError(f"n_samples must be >= 1, got {n_samples}")
    _check_customer(grid, spec)
    n_wind, n_solar = len(grid.placements.wt), len(grid.placements.pv)

    records: List[Dict[str, float]] = []
    features: List[np.ndarray] = []
    solutions: List[OPFSolution] = []
    infeasible: List[Tuple[int, str]] = []
    for index, child in enumerate(tqdm(rng.spawn(n_samples), desc="monte carlo", disable=not progress, leave=False)):
        sample = sample_uncertainty(spec, child, n_wind, n_solar)
        try:
            solution = solve_opf(grid, sample)
        except (InfeasibleOPFError, SolverConvergenceError) as exc:
            logger.warning(f"sample {index} skipped: {exc}")
            infeasible.append((index, str(exc)))
            continue
        records.append(solution.to_record())
        features.append(sample_features(grid, sample))
        if keep_solutions:
            solutions.append(solution)

    if not records:
        raise AggregationError(f"all {n_samples} Monte Carlo samples were infeasible")
    if infeasible:
        logger.warning(f"{len(infeasible)} of {n_samples} samples infeasible and excluded")

    frame = pd.DataFrame.from_records(records)
    stats = {}
    for name in frame.columns:
        mean, std = _column_stats(frame[name].to_numpy(dtype=float))
        stats[name] = QuantityStats(mean=mean, std=std, n_feasible=len(records), n_total=n_samples)
    return PopfResult(
        stats=stats,
        n_feasible=len(records),
        n_total=n_samples,
        infeasible=infeasible,
        records=frame,
        features=np.vstack(features),
        solutions=solutions if keep_solutions else None,
    )


def build_dataset(
    grid: GridModel,
    spec: DistributionSpec,
    n: int,
    target_bus: int,
    rng: np.random.Generator,
    progress: bool = False,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Supervised pairs (uncertain injections -> OPF voltage magnitude)

    Args:
        grid: Radial grid with two WT and two PV placements
        spec: Distributions of the uncertain injections
        n: Number of scenarios to draw
        target_bus: Bus whose voltage magnitude (kV) is the target
        rng: Parent generator

    Returns:
        (X, y): features (wind1, wind2, solar1, solar2, load) in MW and the
        target voltage in kV, in generation order, infeasible rows dropped

    Raises:
        DataQualityError: fewer than n/2 rows were feasible
    """
    grid.bus_index(target_bus)
    if len(grid.placements.wt) != 2 or len(grid.placements.pv) != 2:
        raise DimensionError("datasets need exactly two WT and two PV placements")
    try:
        result = monte_carlo_popf(grid, spec, n, rng, progress=progress)
    except AggregationError as exc:
        raise DataQualityError(f"no feasible rows among {n}") from exc
    if result.n_feasible < n / 2:
        raise DataQualityError(f"only {result.n_feasible} of {n} rows feasible")
    if result.infeasible:
        logger.warning(f"dropped {len(result.infeasible)} infeasible rows")
    y = result.records[f"V_kv_{target_bus}"].to_numpy(dtype=float)
    logger.info(f"Generated {y.size} rows; target bus {target_bus} in [{y.min():.6f}, {y.max():.6f}] kV")
    return result.features, y
