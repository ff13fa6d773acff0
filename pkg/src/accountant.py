"""
Privacy accounting for the noised-gradient trainer

Gaussian mechanism per step, amplification by uniform subsampling at rate
q = B/N, then advanced composition over T rounds:

    eps' = sqrt(2 T ln(1/delta')) * q*eps + T * q*eps * (exp(q*eps) - 1)
    delta_total = T * q * delta + delta'
"""

import logging
import math
from typing import Dict

from src.exceptions import ArgumentError
from src.schemas import DPConfig, PrivacySpend

logger = logging.getLogger(__name__)


def _check_delta(delta: float) -> None:
    if not 0.0 < delta < 1.0:
        raise ArgumentError(f"delta must lie in (0, 1), got {delta}")


def per_step_epsilon(sigma: float, delta: float) -> float:
    """Smallest epsilon for which noise multiplier sigma satisfies the Gaussian-mechanism bound"""
    _check_delta(delta)
    if sigma < 0:
        raise ArgumentError(f"noise multiplier must be >= 0, got {sigma}")
    if sigma == 0:
        logger.warning("noise multiplier is 0: no privacy, epsilon is infinite")
        return math.inf
    return math.sqrt(2.0 * math.log(1.25 / delta)) / sigma


def verbatim_per_step_epsilon(sigma: float, delta: float) -> float:
    """The bound read literally as sqrt(2 ln(1.25) / delta) / sigma"""
    _check_delta(delta)
    if sigma < 0:
        raise ArgumentError(f"noise multiplier must be >= 0, got {sigma}")
    if sigma == 0:
        return math.inf
    return math.sqrt(2.0 * math.log(1.25) / delta) / sigma


def noise_multiplier_for_epsilon(epsilon: float, delta: float) -> float:
    """Inverse of per_step_epsilon"""
    _check_delta(delta)
    if epsilon <= 0:
        raise ArgumentError(f"target epsilon must be > 0, got {epsilon}")
    return math.sqrt(2.0 * math.log(1.25 / delta)) / epsilon


def compose(
    epsilon_step: float,
    delta_step: float,
    sampling_rate: float,
    steps: int,
    delta_prime: float,
) -> PrivacySpend:
    """
    Subsample each step at `sampling_rate`, then compose `steps` rounds

    Args:
        epsilon_step: Per-step epsilon of the Gaussian mechanism
        delta_step: Per-step delta
        sampling_rate: q = B / N in (0, 1]
        steps: Number of composed rounds T
        delta_prime: Slack of the advanced composition bound

    Returns:
        PrivacySpend with subsampled and composed budgets
    """
    if not 0.0 < sampling_rate <= 1.0:
        raise ArgumentError(f"sampling rate must lie in (0, 1], got {sampling_rate}")
    if steps < 1:
        raise ArgumentError(f"steps must be >= 1, got {steps}")
    if not 0.0 < delta_prime < 1.0:
        raise ArgumentError(f"delta' must lie in (0, 1), got {delta_prime}")

    eps_sub = sampling_rate * epsilon_step
    delta_sub = sampling_rate * delta_step
    try:
        growth = math.expm1(eps_sub)
    except OverflowError:
        growth = math.inf
    composed = math.sqrt(2.0 * steps * math.log(1.0 / delta_prime)) * eps_sub + steps * eps_sub * growth
    return PrivacySpend(
        per_step_epsilon=epsilon_step,
        subsampled_epsilon=eps_sub,
        subsampled_delta=delta_sub,
        composed_epsilon=composed,
        composed_delta=steps * delta_sub + delta_prime,
        steps=steps,
        sampling_rate=sampling_rate,
    )


def privacy_report(config: DPConfig) -> Dict[str, PrivacySpend]:
    """
    Spend under both readings of T

    "epochs" composes over the number of epochs, "steps" over every update
    (epochs x floor(N / B)).
    """
    if config.dataset_size is None:
        raise ArgumentError("dataset_size is required for privacy accounting")
    sigma, delta = config.noise_multiplier, config.per_step_delta
    eps = per_step_epsilon(sigma, delta)
    if sigma > 0:
        literal = verbatim_per_step_epsilon(sigma, delta)
        logger.warning(
            f"per-step epsilon reading discrepancy: canonical sqrt(2 ln(1.25/delta))/sigma = {eps:.6g}, "
            f"literal sqrt(2 ln(1.25)/delta)/sigma = {literal:.6g}; canonical is used"
        )
    q = config.sampling_rate
    return {
        "epochs": compose(eps, delta, q, config.epochs, config.composition_delta),
        "steps": compose(eps, delta, q, config.epochs * config.steps_per_epoch, config.composition_delta),
    }
