"""
Differentially Private Training Loop

Per-sample gradients are clipped to norm C, summed, perturbed with
N(0, sigma^2 C^2 I) and divided by the batch size before an SGD or Adam
update. The same loop without clipping and noise serves as the non-private
reference trainer.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, NamedTuple, Optional, Protocol, Tuple

import numpy as np
from tqdm import tqdm

from src.accountant import privacy_report
from src.exceptions import ArgumentError, DimensionError, NumericalError, TrainingAborted
from src.gradients import GradientVector
from src.schemas import DPConfig, PrivacySpend

logger = logging.getLogger(__name__)

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


class Regressor(Protocol):
    """Anything trainable by this loop: the circuit model and the MLP"""

    @property
    def params(self) -> np.ndarray: ...

    @property
    def n_params(self) -> int: ...

    def with_params(self, theta: np.ndarray) -> "Regressor": ...

    def forward(self, X: np.ndarray) -> np.ndarray: ...

    def loss_and_grads(self, X: np.ndarray, y: np.ndarray) -> Tuple[np.ndarray, np.ndarray]: ...


class RngStreams(NamedTuple):
    init: np.random.Generator
    sampling: np.random.Generator
    noise: np.random.Generator


def rng_streams(seed: int) -> RngStreams:
    """Independent generators for initialization, batch sampling and noise"""
    children = np.random.SeedSequence(seed).spawn(3)
    return RngStreams(*(np.random.default_rng(child) for child in children))


def clip_gradient(g: GradientVector, clip_norm: float) -> GradientVector:
    """Scale g by min(1, C / ||g||); the result never exceeds C, so clipping twice is a no-op"""
    if clip_norm <= 0:
        raise ArgumentError(f"clip norm must be > 0, got {clip_norm}")
    if not g.is_finite():
        raise NumericalError("gradient contains non-finite entries")
    norm = g.norm()
    if norm <= clip_norm:
        return GradientVector(g.values.copy())
    factor = clip_norm / norm
    clipped = g.values * factor
    # rounding can leave the norm an ulp above C
    while np.linalg.norm(clipped) > clip_norm:
        factor = np.nextafter(factor, 0.0)
        clipped = g.values * factor
    return GradientVector(clipped)


def clip_rows(grads: np.ndarray, clip_norm: float) -> np.ndarray:
    """clip_gradient applied to every row of a (B, P) matrix"""
    if clip_norm <= 0:
        raise ArgumentError(f"clip norm must be > 0, got {clip_norm}")
    if not np.all(np.isfinite(grads)):
        raise NumericalError("per-sample gradients contain non-finite entries")
    norms = np.linalg.norm(grads, axis=1)
    factors = np.where(norms > clip_norm, clip_norm / np.where(norms > 0, norms, 1.0), 1.0)
    clipped = grads * factors[:, None]
    over = np.linalg.norm(clipped, axis=1) > clip_norm
    while np.any(over):
        factors[over] = np.nextafter(factors[over], 0.0)
        clipped[over] = grads[over] * factors[over, None]
        over = np.linalg.norm(clipped, axis=1) > clip_norm
    return clipped


def noisy_batch_gradient(
    per_sample: List[GradientVector],
    clip_norm: float,
    sigma: float,
    batch_size: int,
    rng: np.random.Generator,
) -> GradientVector:
    """(sum of clipped gradients + N(0, sigma^2 C^2 I)) / B"""
    if not per_sample:
        raise ArgumentError("cannot form a noisy gradient from an empty batch")
    stacked = np.vstack([g.values for g in per_sample])
    return GradientVector(_noised_mean(stacked, clip_norm, sigma, batch_size, rng))


def _noised_mean(
    clipped: np.ndarray, clip_norm: float, sigma: float, batch_size: int, rng: np.random.Generator
) -> np.ndarray:
    # one draw per coordinate every step, even when sigma is 0
    noise = rng.normal(0.0, sigma * clip_norm, size=clipped.shape[1])
    return (clipped.sum(axis=0) + noise) / batch_size


@dataclass
class AdamState:
    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    eps: float = ADAM_EPS

    @classmethod
    def zeros(cls, n_params: int) -> "AdamState":
        return cls(np.zeros(n_params), np.zeros(n_params))


def adam_step(
    theta: np.ndarray, g: GradientVector, state: AdamState, learning_rate: float
) -> Tuple[np.ndarray, AdamState]:
    """Bias-corrected Adam update; returns new parameters and a new state"""
    values = g.values
    if values.shape != theta.shape:
        raise DimensionError(f"gradient shape {values.shape} does not match parameters {theta.shape}")
    t = state.step_count + 1
    m = state.beta1 * state.first_moment + (1.0 - state.beta1) * values
    v = state.beta2 * state.second_moment + (1.0 - state.beta2) * values ** 2
    m_hat = m / (1.0 - state.beta1 ** t)
    v_hat = v / (1.0 - state.beta2 ** t)
    updated = theta - learning_rate * m_hat / (np.sqrt(v_hat) + state.eps)
    return updated, AdamState(m, v, t, state.beta1, state.beta2, state.eps)


@dataclass
class TrainingResult:
    model: Any
    step_losses: np.ndarray
    epoch_losses: np.ndarray
    spend: Optional[PrivacySpend]
    spend_by_reading: Dict[str, PrivacySpend] = field(default_factory=dict)
    status: str = "finished"
    diagnostic: Optional[Dict[str, Any]] = None
    noise_draws: int = 0

    def manifest(self, config: DPConfig) -> Dict[str, Any]:
        """JSON-ready run summary"""
        return {
            "config": config.model_dump(),
            "seed": config.seed,
            "status": self.status,
            "diagnostic": self.diagnostic,
            "epoch_losses": self.epoch_losses.tolist(),
            "privacy_spend": self.spend.report() if self.spend is not None else None,
            "privacy_spend_by_reading": {k: v.report() for k, v in self.spend_by_reading.items()},
        }


def _batches(n: int, config: DPConfig, rng: np.random.Generator) -> List[np.ndarray]:
    steps = n // config.batch_size
    if config.sampling == "shuffle":
        order = rng.permutation(n)
        return [order[i * config.batch_size : (i + 1) * config.batch_size] for i in range(steps)]
    if config.sampling == "poisson":
        rate = config.batch_size / n
        return [np.flatnonzero(rng.random(n) < rate) for _ in range(steps)]
    return [rng.choice(n, size=config.batch_size, replace=False) for _ in range(steps)]


def _train_loop(
    dataset: Tuple[np.ndarray, np.ndarray],
    model: Regressor,
    config: DPConfig,
    private: bool,
    progress: bool,
) -> TrainingResult:
    X, y = np.atleast_2d(np.asarray(dataset[0], dtype=float)), np.asarray(dataset[1], dtype=float).ravel()
    n = X.shape[0]
    if y.size != n:
        raise DimensionError(f"{n} feature rows but {y.size} targets")
    if config.batch_size > n:
        raise ArgumentError(f"batch_size {config.batch_size} exceeds dataset size {n}")
    config = config.model_copy(update={"dataset_size": n})

    streams = rng_streams(config.seed)
    theta = model.params.copy()
    adam = AdamState.zeros(theta.size)
    step_losses: List[float] = []
    epoch_losses: List[float] = []
    noise_draws = 0
    step = 0
    current = model

    epochs = tqdm(range(config.epochs), desc="epochs", disable=not progress, leave=False)
    try:
        for _ in epochs:
            epoch_start = len(step_losses)
            for batch in _batches(n, config, streams.sampling):
                if batch.size:
                    losses, grads = current.loss_and_grads(X[batch], y[batch])
                    loss = float(np.mean(losses))
                    if not np.isfinite(loss) or loss > config.abort_loss:
                        raise TrainingAborted(
                            f"training loss {loss:.6g} at step {step}",
                            step=step,
                            loss=loss,
                            parameter_norm=float(np.linalg.norm(theta)),
                        )
                    step_losses.append(loss)
                else:
                    grads = np.zeros((0, theta.size))

                if private:
                    clipped = clip_rows(grads, config.clip_norm)
                    if clipped.size and np.max(np.linalg.norm(clipped, axis=1)) > config.clip_norm * (1 + 1e-12):
                        raise NumericalError("clipped gradient exceeds the clip norm")
                    direction = _noised_mean(
                        clipped, config.clip_norm, config.noise_multiplier, config.batch_size, streams.noise
                    )
                    noise_draws += theta.size
                else:
                    direction = grads.sum(axis=0) / config.batch_size

                if config.optimizer == "adam":
                    theta, adam = adam_step(theta, GradientVector(direction), adam, config.learning_rate)
                else:
                    theta = theta - config.learning_rate * direction
                current = current.with_params(theta)
                step += 1
            if len(step_losses) > epoch_start:
                epoch_losses.append(float(np.mean(step_losses[epoch_start:])))
                epochs.set_postfix(loss=f"{epoch_losses[-1]:.4g}")
    except TrainingAborted as exc:
        logger.warning(f"training aborted: {exc.diagnostic()}")
        exc.partial = TrainingResult(
            model=current,
            step_losses=np.asarray(step_losses),
            epoch_losses=np.asarray(epoch_losses),
            spend=None,
            status="aborted",
            diagnostic=exc.diagnostic(),
            noise_draws=noise_draws,
        )
        raise

    spend_by_reading = privacy_report(config) if private else {}
    return TrainingResult(
        model=current,
        step_losses=np.asarray(step_losses),
        epoch_losses=np.asarray(epoch_losses),
        spend=spend_by_reading.get("epochs"),
        spend_by_reading=spend_by_reading,
        noise_draws=noise_draws,
    )


def train(
    dataset: Tuple[np.ndarray, np.ndarray],
    model: Regressor,
    config: DPConfig,
    progress: bool = False,
) -> TrainingResult:
    """
    Noised-gradient training

    Args:
        dataset: (X, y) already in the model's encoding and target ranges
        model: Initial model; not modified
        config: Clip norm, noise multiplier, batch size, optimizer, seed...

    Returns:
        TrainingResult with the trained model, losses and privacy spend

    Raises:
        TrainingAborted: loss became non-finite or exceeded config.abort_loss
    """
    logger.info(
        f"DP training: sigma={config.noise_multiplier}, C={config.clip_norm}, B={config.batch_size}, "
        f"epochs={config.epochs}, optimizer={config.optimizer}, sampling={config.sampling}"
    )
    return _train_loop(dataset, model, config, private=True, progress=progress)


def train_non_private(
    dataset: Tuple[np.ndarray, np.ndarray],
    model: Regressor,
    config: DPConfig,
    progress: bool = False,
) -> TrainingResult:
    """Same batching stream as train, plain batch-mean gradients"""
    return _train_loop(dataset, model, config, private=False, progress=progress)


def run_training(
    dataset: Tuple[np.ndarray, np.ndarray],
    model: Regressor,
    config: DPConfig,
    progress: bool = False,
) -> TrainingResult:
    """train, with an abort turned into a structured outcome instead of an exception"""
    try:
        return train(dataset, model, config, progress=progress)
    except TrainingAborted as exc:
        return exc.partial
