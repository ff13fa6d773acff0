"""
Typed records shared across modules (pydantic v2)
"""

import math
from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class DPConfig(BaseModel):
    clip_norm: float = Field(default=1.0, gt=0)
    noise_multiplier: float = Field(default=0.0, ge=0)
    batch_size: int = Field(default=32, ge=1)
    learning_rate: float = Field(default=0.05, gt=0)
    epochs: int = Field(default=1000, ge=1)
    dataset_size: Optional[int] = Field(default=None, ge=1)
    optimizer: Literal["sgd", "adam"] = "adam"
    sampling: Literal["uniform", "shuffle", "poisson"] = "uniform"
    seed: int = 0
    per_step_delta: float = Field(default=1e-5, gt=0, lt=1)
    composition_delta: float = Field(default=1e-5, gt=0, lt=1)
    abort_loss: float = Field(default=1e12, gt=0)

    @field_validator("optimizer", "sampling", mode="before")
    @classmethod
    def _lower(cls, value: Any) -> Any:
        return value.lower() if isinstance(value, str) else value

    @model_validator(mode="after")
    def _batch_fits(self) -> "DPConfig":
        if self.dataset_size is not None and self.batch_size > self.dataset_size:
            raise ValueError(f"batch_size {self.batch_size} exceeds dataset_size {self.dataset_size}")
        return self

    @property
    def steps_per_epoch(self) -> int:
        if self.dataset_size is None:
            raise ValueError("dataset_size is not set")
        return self.dataset_size // self.batch_size

    @property
    def sampling_rate(self) -> float:
        if self.dataset_size is None:
            raise ValueError("dataset_size is not set")
        return self.batch_size / self.dataset_size


class PrivacySpend(BaseModel):
    """
    Privacy budget of one training run

    Neighbouring datasets differ in a single record (distance mu); the
    sensitivity of each step is bounded by the clip norm regardless of mu.
    """

    per_step_epsilon: float = Field(ge=0)
    subsampled_epsilon: float = Field(ge=0)
    subsampled_delta: float = Field(ge=0)
    composed_epsilon: float = Field(ge=0)
    composed_delta: float = Field(ge=0)
    steps: int = Field(ge=1)
    sampling_rate: float = Field(gt=0, le=1)

    @property
    def no_privacy(self) -> bool:
        return not math.isfinite(self.composed_epsilon)

    def report(self) -> Dict[str, Any]:
        """JSON-safe dump: unbounded epsilons become null and set no_privacy"""
        payload: Dict[str, Any] = {
            k: (None if isinstance(v, float) and not math.isfinite(v) else v)
            for k, v in self.model_dump().items()
        }
        payload["no_privacy"] = self.no_privacy
        return payload


class TimingModel(BaseModel):
    prep_measure_seconds: float = Field(default=1e-6, ge=0)
    gate_seconds: float = Field(default=1e-8, ge=0)


class DistributionSpec(BaseModel):
    wind_shape: float = Field(default=1.0, gt=0)
    wind_scale: float = Field(default=4.8, gt=0)
    solar_a: float = Field(default=2.0, gt=0)
    solar_b: float = Field(default=5.0, gt=0)
    load_mean: float = 0.0
    load_std: float = Field(default=0.3, ge=0)
    # None disables truncation at the top
    wind_capacity: Optional[float] = Field(default=0.8, ge=0)
    solar_capacity: Optional[float] = Field(default=0.8, ge=0)
    customer_bus: int = 30

    @property
    def deterministic(self) -> bool:
        return self.load_std == 0.0 and self.wind_capacity == 0.0 and self.solar_capacity == 0.0


class BusRecord(BaseModel):
    id: int
    p: float = 0.0
    q: float = 0.0
    pmin: float = 0.0
    pmax: float = 0.0
    qmin: float = 0.0
    qmax: float = 0.0
    vmin: float = Field(default=0.95, gt=0)
    vmax: float = Field(default=1.05, gt=0)
    cost: float = 0.0
    kind: Literal["load", "slack", "dg"] = "load"

    @model_validator(mode="after")
    def _ordered(self) -> "BusRecord":
        for lo, hi in (("pmin", "pmax"), ("qmin", "qmax"), ("vmin", "vmax")):
            if getattr(self, lo) > getattr(self, hi):
                raise ValueError(f"bus {self.id}: {lo} exceeds {hi}")
        return self


class LineRecord(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    from_bus: int = Field(alias="from")
    to_bus: int = Field(alias="to")
    r: float = Field(ge=0)
    x: float = Field(ge=0)
    lmax: Optional[float] = Field(default=None, gt=0)


class Placements(BaseModel):
    wt: List[int] = Field(default_factory=lambda: [25, 30])
    pv: List[int] = Field(default_factory=lambda: [15, 22])
    customer: int = 30


class GridDocument(BaseModel):
    base_kv: float = Field(default=12.66, gt=0)
    base_mva: float = Field(default=10.0, gt=0)
    slack: int
    units: Literal["ohm", "pu"] = "ohm"
    # substation voltage set-point, per-unit magnitude
    slack_voltage: float = Field(default=1.0, gt=0)
    buses: List[BusRecord]
    lines: List[LineRecord]
    placements: Placements = Field(default_factory=Placements)


class QuantityStats(BaseModel):
    mean: float
    std: float
    n_feasible: int
    n_total: int


class RunConfig(BaseModel):
    """Resolved parameters of one CLI invocation"""

    command: str
    seed: int = 0
    seeds: List[int] = Field(default_factory=lambda: [0])
    grid: str = "ieee33"
    sigmas: List[float] = Field(default_factory=lambda: [0.0])
    epochs: int = Field(default=1000, ge=1)
    out: Optional[str] = None
    options: Dict[str, Any] = Field(default_factory=dict)

    @field_validator("sigmas")
    @classmethod
    def _non_negative(cls, values: List[float]) -> List[float]:
        if any(s < 0 for s in values):
            raise ValueError("noise multipliers must be >= 0")
        return values
