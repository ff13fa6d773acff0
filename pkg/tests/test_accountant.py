"""
Tests for the privacy accountant
"""

import itertools
import math
from decimal import Decimal, getcontext

import pytest

from src.accountant import (
    compose,
    noise_multiplier_for_epsilon,
    per_step_epsilon,
    privacy_report,
    verbatim_per_step_epsilon,
)
from src.exceptions import ArgumentError
from src.schemas import DPConfig


def composed_oracle(eps: float, q: float, steps: int, delta_prime: float) -> Decimal:
    getcontext().prec = 50
    eps_sub = Decimal(q) * Decimal(eps)
    term1 = (2 * Decimal(steps) * (1 / Decimal(delta_prime)).ln()).sqrt() * eps_sub
    term2 = Decimal(steps) * eps_sub * (eps_sub.exp() - 1)
    return term1 + term2


def test_per_step_epsilon_golden_value():
    assert per_step_epsilon(1.0, 1e-5) == pytest.approx(4.8449, abs=1e-3)


def test_zero_noise_is_not_private():
    assert per_step_epsilon(0.0, 1e-5) == math.inf


@pytest.mark.parametrize("sigma, delta", [(-1.0, 1e-5), (1.0, 0.0), (1.0, 1.0)])
def test_per_step_epsilon_domain(sigma, delta):
    with pytest.raises(ArgumentError):
        per_step_epsilon(sigma, delta)


def test_inverse_round_trip():
    sigma = noise_multiplier_for_epsilon(per_step_epsilon(2.5, 1e-6), 1e-6)
    assert sigma == pytest.approx(2.5, rel=1e-12)
    with pytest.raises(ArgumentError):
        noise_multiplier_for_epsilon(0.0, 1e-5)


def test_literal_reading_differs():
    assert verbatim_per_step_epsilon(1.0, 1e-5) == pytest.approx(math.sqrt(2 * math.log(1.25) / 1e-5))
    assert verbatim_per_step_epsilon(1.0, 1e-5) > per_step_epsilon(1.0, 1e-5)


def test_compose_matches_high_precision_oracle():
    for sigma, q, steps, dp in itertools.product((0.7, 1.0, 5.0), (0.01, 0.032, 1.0), (1, 31, 1000), (1e-5, 1e-3)):
        eps = per_step_epsilon(sigma, 1e-5)
        spend = compose(eps, 1e-5, q, steps, dp)
        oracle = composed_oracle(eps, q, steps, dp)
        assert abs(Decimal(spend.composed_epsilon) - oracle) <= Decimal("1e-12") * oracle
        assert spend.composed_delta == pytest.approx(steps * q * 1e-5 + dp, rel=1e-15)
        assert spend.subsampled_epsilon == pytest.approx(q * eps, rel=1e-15)


def test_compose_monotonicity():
    sigmas = (0.5, 1.0, 2.0, 5.0, 10.0)
    rates = (0.001, 0.01, 0.05, 0.2, 1.0)
    steps = (1, 10, 100, 1000, 31000)

    def eps(sigma, q, T):
        return compose(per_step_epsilon(sigma, 1e-5), 1e-5, q, T, 1e-5).composed_epsilon

    for sigma, q in itertools.product(sigmas, rates):
        values = [eps(sigma, q, T) for T in steps]
        assert all(a < b for a, b in zip(values, values[1:]))
    for sigma, T in itertools.product(sigmas, steps):
        values = [eps(sigma, q, T) for q in rates]
        assert all(a < b for a, b in zip(values, values[1:]))
    for q, T in itertools.product(rates, steps):
        values = [eps(s, q, T) for s in sigmas]
        assert all(a > b for a, b in zip(values, values[1:]))


@pytest.mark.parametrize(
    "args",
    [(1.0, 1e-5, 0.0, 10, 1e-5), (1.0, 1e-5, 1.5, 10, 1e-5), (1.0, 1e-5, 0.1, 0, 1e-5), (1.0, 1e-5, 0.1, 10, 0.0)],
)
def test_compose_domain(args):
    with pytest.raises(ArgumentError):
        compose(*args)


def test_compose_overflow_is_infinite():
    spend = compose(1e6, 1e-5, 1.0, 10, 1e-5)
    assert spend.composed_epsilon == math.inf


def test_privacy_report_both_readings():
    config = DPConfig(noise_multiplier=1.0, batch_size=32, dataset_size=1000, epochs=1000)
    report = privacy_report(config)
    assert report["epochs"].steps == 1000
    assert report["steps"].steps == 1000 * 31
    assert report["steps"].composed_epsilon > report["epochs"].composed_epsilon
    assert report["epochs"].sampling_rate == pytest.approx(0.032)


def test_privacy_report_needs_dataset_size():
    with pytest.raises(ArgumentError):
        privacy_report(DPConfig(noise_multiplier=1.0))


def test_unbounded_spend_reports_null_epsilon():
    spend = privacy_report(DPConfig(noise_multiplier=0.0, batch_size=32, dataset_size=1000, epochs=2))["epochs"]
    assert spend.no_privacy
    report = spend.report()
    assert report["composed_epsilon"] is None and report["per_step_epsilon"] is None
    assert report["no_privacy"] is True
    assert report["steps"] == 2

    bounded = privacy_report(DPConfig(noise_multiplier=1.0, batch_size=32, dataset_size=1000, epochs=2))["epochs"]
    assert bounded.report()["composed_epsilon"] == bounded.composed_epsilon
    assert bounded.report()["no_privacy"] is False
