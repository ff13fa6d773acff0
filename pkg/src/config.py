"""
Configuration: environment settings plus YAML experiment defaults

Precedence is CLI flag > config.yaml (or --config file) > built-in default.
"""

import logging
from functools import lru_cache
from pathlib import Path
from typing import List, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError
from pydantic_settings import BaseSettings, SettingsConfigDict

from src.exceptions import ArtifactIOError, ConfigurationError
from src.schemas import DistributionSpec, DPConfig, Placements, TimingModel

logger = logging.getLogger(__name__)


class Settings(BaseSettings):
    # .env and process environment
    model_config = SettingsConfigDict(env_file=".env", env_file_encoding="utf-8", extra="ignore")

    # falls back to LOG_LEVEL in config.yaml when unset
    log_level: Optional[str] = Field(default=None)
    config_file: str = Field(default="config.yaml")
    output_dir: Optional[str] = Field(default=None)
    progress: bool = Field(default=True)


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    return Settings()


class ExperimentConfig(BaseModel):
    """Experiment defaults; YAML keys are the upper-case field names"""

    model_config = ConfigDict(alias_generator=str.upper, populate_by_name=True, extra="forbid")

    output_dir: str = "./outputs"

    grid: str = "ieee33"
    target_bus: int = 30
    wt_buses: List[int] = Field(default_factory=lambda: [25, 30])
    pv_buses: List[int] = Field(default_factory=lambda: [15, 22])
    customer_bus: int = 30

    wind_shape: float = 1.0
    wind_scale: float = 4.8
    wind_capacity: Optional[float] = 0.8
    solar_a: float = 2.0
    solar_b: float = 5.0
    solar_capacity: Optional[float] = 0.8
    load_mean: float = 0.0
    load_std: float = 0.3
    n_samples: int = Field(default=1000, ge=1)

    n_qubits: int = 5
    n_layers: int = 10
    entangle_range: int = 1

    learning_rate: float = 0.05
    batch_size: int = 32
    clip_norm: float = 1.0
    epochs: int = 1000
    optimizer: str = "adam"
    sampling: str = "uniform"
    delta: float = 1e-5
    delta_prime: float = 1e-5
    sigmas: List[float] = Field(default_factory=lambda: [0.0, 1.0, 5.0, 10.0])
    table3_sigmas: List[float] = Field(default_factory=lambda: [0.0, 1.0, 2.0, 5.0])
    test_fraction: float = Field(default=0.2, gt=0, lt=1)

    mlp_hidden: List[int] = Field(default_factory=lambda: [32, 32])

    shots: int = Field(default=100, ge=1)
    shot_repeats: int = Field(default=10, ge=1)
    t_max: int = 400
    load_scale: float = 0.2
    prep_measure_seconds: float = 1e-6
    gate_seconds: float = 1e-8
    timing_repeats: int = Field(default=100_000, ge=1)

    log_level: str = "INFO"
    seed: int = 0

    def placements(self) -> Placements:
        return Placements(wt=self.wt_buses, pv=self.pv_buses, customer=self.customer_bus)

    def distribution_spec(self) -> DistributionSpec:
        return DistributionSpec(
            wind_shape=self.wind_shape,
            wind_scale=self.wind_scale,
            wind_capacity=self.wind_capacity,
            solar_a=self.solar_a,
            solar_b=self.solar_b,
            solar_capacity=self.solar_capacity,
            load_mean=self.load_mean,
            load_std=self.load_std,
            customer_bus=self.customer_bus,
        )

    def dp_config(self, sigma: float, seed: Optional[int] = None, epochs: Optional[int] = None) -> DPConfig:
        return DPConfig(
            clip_norm=self.clip_norm,
            noise_multiplier=sigma,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            epochs=self.epochs if epochs is None else epochs,
            optimizer=self.optimizer,
            sampling=self.sampling,
            seed=self.seed if seed is None else seed,
            per_step_delta=self.delta,
            composition_delta=self.delta_prime,
        )

    def timing_model(self) -> TimingModel:
        return TimingModel(prep_measure_seconds=self.prep_measure_seconds, gate_seconds=self.gate_seconds)


def load_experiment_config(path: Optional[Union[str, Path]] = None) -> ExperimentConfig:
    """
    Read experiment defaults from YAML

    Args:
        path: YAML file; defaults to the configured config_file. A missing
            default file yields built-in defaults, a missing explicit file is an error.
    """
    explicit = path is not None
    path = Path(path if explicit else get_settings().config_file)
    if not path.exists():
        if explicit:
            raise ArtifactIOError(f"config file not found: {path}")
        logger.info(f"{path} not found, using built-in defaults")
        return ExperimentConfig()
    try:
        with open(path, "r", encoding="utf-8") as f:
            payload = yaml.safe_load(f) or {}
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"{path} is not valid YAML: {exc}") from exc
    except OSError as exc:
        raise ArtifactIOError(f"cannot read {path}: {exc}") from exc
    try:
        return ExperimentConfig.model_validate(payload)
    except ValidationError as exc:
        raise ConfigurationError(f"invalid configuration in {path}: {exc}") from exc
