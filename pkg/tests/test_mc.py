"""Tests for the Monte Carlo engine: determinism, degenerate exactness,
CLT behavior, and agreement with every closed-form pricer."""

from __future__ import annotations

import math

import numpy as np
import pytest

from mrspricing.mc import mc_forward_option, mc_forward_price, mc_spot_option
from mrspricing.model import (
    AffineMarketPriceOfRisk,
    BaseParams,
    DropParams,
    ModelParams,
    Regime,
    RegimeHistory,
    SpikeParams,
    TransitionSpec,
)
from mrspricing.pricing import (
    DeliverySpec,
    PricingContext,
    forward_option,
    forward_price,
    forward_price_period,
    spot_option,
)

from conftest import REFERENCE_LAMBDA, make_reference_params

ZERO_LAMBDA = AffineMarketPriceOfRisk(0.0, 0.0)


def make_ctx(params=None, seasonal=None, lam=REFERENCE_LAMBDA, history=None, r=0.0):
    return PricingContext(
        params=params if params is not None else make_reference_params(),
        seasonal=seasonal,
        lam=lam,
        history=history if history is not None else RegimeHistory.at_base(40.0),
        r=r,
    )


def ripple_seasonal(t):
    t = np.asarray(t, dtype=float)
    return 5.0 * np.sin(2.0 * np.pi * t / 365.0) + 1.5 * np.cos(2.0 * np.pi * t / 7.0)


def noise_free_params():
    matrix = np.eye(3)
    return ModelParams(
        base=BaseParams(alpha=5.98, beta=0.16, sigma=0.0),
        spike=SpikeParams(mu=2.89, sigma=0.0, shift=30.0),
        drop=DropParams(mu=2.62, sigma=0.0, shift=45.0),
        transitions=TransitionSpec.constant(matrix),
    )


WINDOW = DeliverySpec(t1=31, t2=58)


class TestGuards:
    def test_path_floor(self):
        ctx = make_ctx()
        with pytest.raises(ValueError):
            mc_spot_option(ctx, 40.0, 30.0, n_paths=500, seed=1)
        with pytest.raises(ValueError):
            mc_forward_price(ctx, 0.0, 30.0, n_paths=999, seed=1)
        with pytest.raises(ValueError):
            mc_forward_option(ctx, 40.0, 26.0, WINDOW, n_paths=10, seed=1)

    def test_spot_option_maturity_positive(self):
        with pytest.raises(ValueError):
            mc_spot_option(make_ctx(), 40.0, 0.0, n_paths=2000, seed=1)

    def test_forward_option_requires_base_state(self):
        history = RegimeHistory(regime=Regime.DROP, last_base_value=40.0, lag=1)
        with pytest.raises(ValueError):
            mc_forward_option(make_ctx(history=history), 40.0, 26.0, WINDOW, n_paths=2000, seed=1)

    def test_forward_option_maturity_before_delivery(self):
        with pytest.raises(ValueError):
            mc_forward_option(make_ctx(), 40.0, 35.0, WINDOW, n_paths=2000, seed=1)

    def test_continuous_window_rejected(self):
        spec = DeliverySpec(t1=31, t2=58, discretization="continuous")
        with pytest.raises(ValueError):
            mc_forward_price(make_ctx(), 0.0, spec, n_paths=2000, seed=1)


class TestDeterminism:
    def test_same_seed_same_bits(self):
        ctx = make_ctx(seasonal=ripple_seasonal)
        a = mc_spot_option(ctx, 40.0, 20.0, n_paths=5000, seed=42)
        b = mc_spot_option(ctx, 40.0, 20.0, n_paths=5000, seed=42)
        assert a.value == b.value and a.stderr == b.stderr

    def test_different_seed_different_value(self):
        ctx = make_ctx()
        a = mc_spot_option(ctx, 40.0, 20.0, n_paths=5000, seed=1)
        b = mc_spot_option(ctx, 40.0, 20.0, n_paths=5000, seed=2)
        assert a.value != b.value

    def test_estimate_records_inputs(self):
        est = mc_forward_price(make_ctx(), 0.0, 10.0, n_paths=2000, seed=7)
        assert est.n_paths == 2000 and est.seed == 7


class TestDegenerateExactness:
    def test_spot_option_noise_free(self):
        params = noise_free_params()
        ctx = make_ctx(params=params, lam=ZERO_LAMBDA)
        T, K = 5.0, 40.0
        beta = params.base.beta
        x_det = 40.0 * math.exp(-beta * T) + params.base.mean_level * (1 - math.exp(-beta * T))
        est = mc_spot_option(ctx, K, T, n_paths=2000, seed=3)
        assert est.value == pytest.approx(max(x_det - K, 0.0), abs=1e-12)
        assert est.stderr <= 1e-12

    def test_forward_price_noise_free(self):
        params = noise_free_params()
        ctx = make_ctx(params=params, lam=ZERO_LAMBDA, seasonal=ripple_seasonal)
        est = mc_forward_price(ctx, 0.0, 12.0, n_paths=2000, seed=3)
        assert est.value == pytest.approx(forward_price(ctx, 0.0, 12.0), abs=1e-12)
        assert est.stderr <= 1e-12

    def test_forward_option_noise_free(self):
        params = noise_free_params()
        ctx = make_ctx(params=params, lam=ZERO_LAMBDA)
        got = mc_forward_option(ctx, 40.0, 26.0, WINDOW, n_paths=2000, seed=3)
        want = forward_option(ctx, 40.0, 26.0, WINDOW)
        assert got.value == pytest.approx(want, abs=1e-12)
        assert got.stderr <= 1e-12


class TestCltScaling:
    def test_stderr_shrinks_like_root_n(self):
        ctx = make_ctx(seasonal=ripple_seasonal)
        small = mc_spot_option(ctx, 40.0, 30.0, n_paths=20_000, seed=11)
        big = mc_spot_option(ctx, 40.0, 30.0, n_paths=80_000, seed=11)
        ratio = big.stderr / small.stderr
        assert ratio == pytest.approx(0.5, rel=0.2)


class TestAgainstClosedForms:
    def test_spot_option_grid(self):
        ctx = make_ctx(seasonal=ripple_seasonal)
        for K, T, seed in ((30.0, 30.0, 101), (45.0, 90.0, 102), (60.0, 14.0, 103)):
            est = mc_spot_option(ctx, K, T, n_paths=100_000, seed=seed)
            want = spot_option(ctx, K, T)
            assert abs(est.value - want) <= 3.0 * est.stderr, (K, T, est.value, want, est.stderr)

    def test_spot_option_fractional_maturity(self):
        ctx = make_ctx(seasonal=ripple_seasonal)
        est = mc_spot_option(ctx, 42.0, 20.5, n_paths=100_000, seed=104)
        want = spot_option(ctx, 42.0, 20.5)
        assert abs(est.value - want) <= 3.0 * est.stderr

    def test_spot_option_from_spike_state(self):
        history = RegimeHistory(regime=Regime.SPIKE, last_base_value=40.0, lag=3)
        ctx = make_ctx(history=history)
        est = mc_spot_option(ctx, 45.0, 15.0, n_paths=100_000, seed=105)
        want = spot_option(ctx, 45.0, 15.0)
        assert abs(est.value - want) <= 3.0 * est.stderr

    def test_forward_single_delivery(self):
        ctx = make_ctx(seasonal=ripple_seasonal)
        for T, seed in ((7.0, 31), (30.0, 32), (180.0, 33)):
            est = mc_forward_price(ctx, 0.0, T, n_paths=100_000, seed=seed)
            want = forward_price(ctx, 0.0, T)
            assert abs(est.value - want) <= 3.0 * est.stderr

    def test_forward_window(self):
        ctx = make_ctx(seasonal=ripple_seasonal, r=0.0003)
        for weighting, seed in (("at_maturity", 41), ("instant", 42)):
            spec = DeliverySpec(t1=31, t2=58, weighting=weighting)
            est = mc_forward_price(ctx, 0.0, spec, n_paths=100_000, seed=seed)
            want = forward_price_period(ctx, 0.0, spec)
            assert abs(est.value - want) <= 3.0 * est.stderr

    def test_forward_window_observed_mid_horizon_from_spike(self):
        ctx = make_ctx(seasonal=ripple_seasonal)
        state = RegimeHistory(regime=Regime.SPIKE, last_base_value=47.0, lag=2)
        est = mc_forward_price(ctx, 3.0, WINDOW, n_paths=100_000, seed=43, history_at_t=state)
        want = forward_price_period(ctx, 3.0, WINDOW, history_at_t=state)
        assert abs(est.value - want) <= 3.0 * est.stderr

    def test_forward_window_starting_at_observation_day(self):
        """Delivery starting on the observation day itself: the first day's
        spot must be drawn immediately, not skipped."""
        ctx = make_ctx()
        state = RegimeHistory(regime=Regime.SPIKE, last_base_value=47.0, lag=1)
        spec = DeliverySpec(t1=31, t2=34)
        est = mc_forward_price(ctx, 31.0, spec, n_paths=50_000, seed=44, history_at_t=state)
        want = forward_price_period(ctx, 31.0, spec, history_at_t=state)
        assert abs(est.value - want) <= 3.0 * est.stderr

    def test_forward_option_strikes(self):
        ctx = make_ctx(seasonal=ripple_seasonal)
        # strikes straddle the window forward (about 50.4 with this seasonal)
        for K, seed in ((44.0, 51), (48.0, 52), (51.0, 53)):
            est = mc_forward_option(ctx, K, 26.0, WINDOW, n_paths=100_000, seed=seed)
            want = forward_option(ctx, K, 26.0, WINDOW)
            assert abs(est.value - want) <= 3.0 * est.stderr, (K, est.value, want, est.stderr)

    def test_forward_option_with_rate_and_fractional_maturity(self):
        ctx = make_ctx(seasonal=ripple_seasonal, r=0.0004)
        est = mc_forward_option(ctx, 45.0, 26.5, WINDOW, n_paths=100_000, seed=54)
        want = forward_option(ctx, 45.0, 26.5, WINDOW)
        assert abs(est.value - want) <= 3.0 * est.stderr

    def test_tower_property_of_window_forward(self):
        """Deep in the money the option pays f - K, so the estimate recovers
        the time-0 period forward through the tower property."""
        ctx = make_ctx(seasonal=ripple_seasonal)
        K = -10_000.0
        est = mc_forward_option(ctx, K, 26.0, WINDOW, n_paths=50_000, seed=55)
        implied_forward = est.value - (0.0 - K)
        f0 = forward_price_period(ctx, 0.0, WINDOW)
        assert abs(implied_forward - f0) <= 3.0 * est.stderr


class TestNestedAuditMode:
    def test_nested_agrees_with_analytic_inner(self):
        ctx = make_ctx()
        K, t = 42.0, 10.0
        spec = DeliverySpec(t1=12, t2=18)
        plain = mc_forward_option(ctx, K, t, spec, n_paths=4000, seed=61)
        nested = mc_forward_option(ctx, K, t, spec, n_paths=4000, seed=61, nested=True, n_inner=400)
        want = forward_option(ctx, K, t, spec)
        assert abs(plain.value - want) <= 3.0 * plain.stderr
        # the nested estimator carries a small upward Jensen bias on top of
        # its sampling noise, so allow a widened band
        assert abs(nested.value - want) <= 3.0 * nested.stderr + 0.05

    def test_nested_rejects_continuous(self):
        ctx = make_ctx()
        spec = DeliverySpec(t1=12.0, t2=18.0, discretization="continuous")
        with pytest.raises(ValueError):
            mc_forward_option(ctx, 42.0, 10.0, spec, n_paths=2000, seed=62, nested=True)
