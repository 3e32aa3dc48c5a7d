"""Closed-form valuation under the pricing measure.

Covers European calls on the spot, forwards on a fixed delivery day,
forwards on a delivery period, and European calls on period forwards.  The
spot call mixes three conditional payoffs (Gaussian base, shifted lognormal
spike, reflected lognormal drop) with the regime probabilities at the
maturity day.  Period forwards are weighted averages of single-day forwards
and reduce to an affine function A*x + B of the latent base value at the
regime anchor; options on them price that affine payoff against the
Gaussian law of the anchor value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from .errors import InternalError
from .model import (
    AffineMarketPriceOfRisk,
    BaseParams,
    DropParams,
    MarketPriceOfRisk,
    ModelParams,
    Regime,
    RegimeHistory,
    SpikeParams,
    anchored_base_moments,
    as_seasonal_fn,
    base_conditional_moments,
    chain_probs,
    restricted_path_prob,
)
from .riskpremium import window_offsets

__all__ = [
    "PricingContext",
    "DeliverySpec",
    "delivery_weights",
    "delivery_window_coefficients",
    "spot_option",
    "forward_price",
    "forward_price_period",
    "forward_option",
]

_SQRT_2PI = math.sqrt(2.0 * math.pi)


def _phi(z: float) -> float:
    return math.exp(-0.5 * z * z) / _SQRT_2PI


@dataclass(frozen=True)
class PricingContext:
    """Everything a valuation needs: model, seasonal shape, market price of
    risk, the time-0 regime state, and the daily interest rate.

    ``seasonal`` may be a fitted seasonal model (then ``valuation_date``
    anchors its day offsets), a plain callable on day offsets, or None for a
    pure deseasonalized valuation.  The resolved offset function is exposed
    as ``g``.
    """

    params: ModelParams
    seasonal: object
    lam: MarketPriceOfRisk
    history: RegimeHistory
    r: float = 0.0
    valuation_date: object = None
    g: object = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.r < 0.0:
            raise ValueError("interest rate must be nonnegative")
        if not isinstance(self.lam, MarketPriceOfRisk):
            raise ValueError("a market price of risk is required for pricing")
        object.__setattr__(self, "g", as_seasonal_fn(self.seasonal, self.valuation_date))

    def g_at(self, t: float) -> float:
        return float(self.g(t))


@dataclass(frozen=True)
class DeliverySpec:
    """Delivery window [t1, t2] in days with its settlement weighting.

    ``at_maturity`` weights delivery days uniformly; ``instant`` weights them
    by the discount factor (continuous payment during delivery).  The
    ``daily`` discretization sums over integer delivery days, ``continuous``
    integrates over the window.
    """

    t1: float
    t2: float
    weighting: str = "at_maturity"
    discretization: str = "daily"

    def __post_init__(self):
        if self.t2 < self.t1:
            raise ValueError("delivery window must have t1 <= t2")
        if self.weighting not in ("at_maturity", "instant"):
            raise ValueError(f"unknown weighting {self.weighting!r}")
        if self.discretization not in ("daily", "continuous"):
            raise ValueError(f"unknown discretization {self.discretization!r}")
        if self.discretization == "continuous" and not self.t2 > self.t1:
            raise ValueError("continuous windows need t1 < t2")


def delivery_weights(spec: DeliverySpec, r: float = 0.0):
    """Integer delivery days and normalized weights of a daily window."""
    if spec.discretization != "daily":
        raise ValueError("delivery_weights applies to daily discretization")
    days = window_offsets(spec.t1, spec.t2)
    if spec.weighting == "at_maturity" or r == 0.0:
        w = np.full(days.size, 1.0 / days.size)
    else:
        w = np.exp(-r * (days - days[0]))
        w /= w.sum()
    if abs(w.sum() - 1.0) > 1e-10:
        raise InternalError("delivery weights failed to normalize")
    return days, w


def _continuous_segments(spec: DeliverySpec, r: float):
    """Per-day pieces of the continuous window: (day, W0, W1) with
    W0 = integral of the weight density over the piece and W1 the first
    moment.  The decay moment depends on the anchor and is computed by the
    caller from the endpoints, so each piece carries (u, v) too."""
    t1, t2 = spec.t1, spec.t2
    instant = spec.weighting == "instant" and r > 1e-12
    if instant:
        denom = math.exp(-r * t1) - math.exp(-r * t2)
    pieces = []
    n = math.floor(t1)
    while n < t2:
        u = max(t1, float(n))
        v = min(t2, float(n + 1))
        if v > u:
            if instant:
                w0 = (math.exp(-r * u) - math.exp(-r * v)) / denom
                w1 = (u * math.exp(-r * u) - v * math.exp(-r * v)
                      + (math.exp(-r * u) - math.exp(-r * v)) / r) / denom
            else:
                w0 = (v - u) / (t2 - t1)
                w1 = 0.5 * (v * v - u * u) / (t2 - t1)
            pieces.append((n, u, v, w0, w1))
        n += 1
    return pieces


def _segment_decay(u, v, beta, anchor, spec, r):
    """Integral of the weight density times exp(-beta (T - anchor)) over a
    piece [u, v] of the window."""
    if spec.weighting == "instant" and r > 1e-12:
        denom = math.exp(-r * spec.t1) - math.exp(-r * spec.t2)
        rb = r + beta
        return r * (math.exp(-r * u - beta * (u - anchor))
                    - math.exp(-r * v - beta * (v - anchor))) / (rb * denom)
    return (math.exp(-beta * (u - anchor)) - math.exp(-beta * (v - anchor))) / (
        beta * (spec.t2 - spec.t1)
    )


def delivery_window_coefficients(ctx: PricingContext, t: float, spec: DeliverySpec,
                                 regime_at_t: Regime, anchor: float):
    """Affine representation f = A*x + B of the window forward at time t.

    ``x`` is the latent base value at ``anchor`` (the current value when the
    regime at t is base, the last recorded base value otherwise).  The regime
    probabilities for each delivery day come from the chain kernel between
    day floor(t) and the delivery day, with ``regime_at_t`` selecting the
    row.  The drift-adjustment integral is active from time 0 only, so
    anchors in the past clamp its lower limit at 0.
    """
    params = ctx.params
    base = params.base
    beta = base.beta
    t_floor = math.floor(t)
    a_eff = max(anchor, 0.0)
    lam = ctx.lam
    affine = isinstance(lam, AffineMarketPriceOfRisk)
    if affine:
        c0 = -lam.lam1 / beta**2 + lam.lam2 / beta
        c1 = lam.lam1 / beta
        c2 = lam.lam1 * (1.0 / beta**2 - a_eff / beta) - lam.lam2 / beta

    p_b0 = p_b1 = p_be = p_be_eff = p_s0 = p_d0 = 0.0
    g_w = 0.0
    w_total = 0.0
    lam_quad = 0.0

    if spec.discretization == "daily":
        days, weights = delivery_weights(spec, ctx.r)
        for day, w in zip(days, weights):
            row = chain_probs(params.transitions, t_floor, int(day))[regime_at_t]
            pb = row[Regime.BASE]
            p_b0 += w * pb
            p_b1 += w * pb * day
            p_be += w * pb * math.exp(-beta * (day - anchor))
            p_be_eff += w * pb * math.exp(-beta * (day - a_eff))
            p_s0 += w * row[Regime.SPIKE]
            p_d0 += w * row[Regime.DROP]
            g_w += w * ctx.g_at(float(day))
            w_total += w
            if not affine:
                lam_quad += w * pb * lam.ou_weighted_integral(beta, a_eff, float(day))
    else:
        from scipy.integrate import quad

        for n, u, v, w0, w1 in _continuous_segments(spec, ctx.r):
            row = chain_probs(params.transitions, t_floor, n)[regime_at_t]
            pb = row[Regime.BASE]
            p_b0 += w0 * pb
            p_b1 += w1 * pb
            p_be += pb * _segment_decay(u, v, beta, anchor, spec, ctx.r)
            p_be_eff += pb * _segment_decay(u, v, beta, a_eff, spec, ctx.r)
            p_s0 += w0 * row[Regime.SPIKE]
            p_d0 += w0 * row[Regime.DROP]
            g_w += w0 * ctx.g_at(float(n))
            w_total += w0
            if not affine:
                dens = _weight_density(spec, ctx.r)
                val, _ = quad(
                    lambda T: dens(T) * lam.ou_weighted_integral(beta, a_eff, T),
                    u, v, epsabs=1e-12, epsrel=1e-12,
                )
                lam_quad += pb * val

    if abs(w_total - 1.0) > 1e-10:
        raise InternalError("delivery weights failed to normalize")

    if affine:
        lam_part = c0 * p_b0 + c1 * p_b1 + c2 * p_be_eff
    else:
        lam_part = lam_quad

    A = p_be
    B = (
        base.mean_level * (p_b0 - A)
        - lam_part
        + params.spike.mean * p_s0
        + params.drop.mean * p_d0
        + g_w
    )
    return float(A), float(B)


def _weight_density(spec: DeliverySpec, r: float):
    if spec.weighting == "instant" and r > 1e-12:
        denom = math.exp(-r * spec.t1) - math.exp(-r * spec.t2)
        return lambda T: r * math.exp(-r * T) / denom
    width = spec.t2 - spec.t1
    return lambda T: 1.0 / width


def _base_call(mean: float, std: float, strike: float) -> float:
    """E(X - strike)^+ for Gaussian X."""
    if std <= 0.0:
        return max(mean - strike, 0.0)
    d = (strike - mean) / std
    return std * _phi(d) + (mean - strike) * ndtr(-d)


def _spike_call(spike: SpikeParams, strike: float) -> float:
    """E(X - strike)^+ for X = shift + lognormal."""
    a = strike - spike.shift
    if a <= 0.0:
        return spike.mean - strike
    mu, sig = spike.mu, spike.sigma
    if sig <= 0.0:
        return max(math.exp(mu) - a, 0.0)
    ln_a = math.log(a)
    return math.exp(mu + 0.5 * sig * sig) * ndtr(-(ln_a - mu - sig * sig) / sig) - a * ndtr(
        -(ln_a - mu) / sig
    )


def _drop_call(drop: DropParams, strike: float) -> float:
    """E(X - strike)^+ for X = shift - lognormal."""
    b = drop.shift - strike
    if b <= 0.0:
        return 0.0
    mu, sig = drop.mu, drop.sigma
    if sig <= 0.0:
        return max(b - math.exp(mu), 0.0)
    ln_b = math.log(b)
    return b * ndtr((ln_b - mu) / sig) - math.exp(mu + 0.5 * sig * sig) * ndtr(
        (ln_b - mu - sig * sig) / sig
    )


def spot_option(ctx: PricingContext, K: float, T: float) -> float:
    """Discounted European call on the spot price at maturity T.

    The strike is first reduced by the seasonal value at T; the three regime
    parts are then priced against the deseasonalized laws and mixed with the
    regime probabilities at day floor(T) given the time-0 state."""
    if T <= 0.0:
        raise ValueError("option maturity must be positive")
    params = ctx.params
    kprime = K - ctx.g_at(T)
    row = chain_probs(params.transitions, 0, math.floor(T))[ctx.history.regime]
    mean, var = anchored_base_moments(params.base, ctx.history, T, ctx.lam)
    value = (
        row[Regime.BASE] * _base_call(mean, math.sqrt(var), kprime)
        + row[Regime.SPIKE] * _spike_call(params.spike, kprime)
        + row[Regime.DROP] * _drop_call(params.drop, kprime)
    )
    return math.exp(-ctx.r * T) * float(value)


def forward_price(ctx: PricingContext, t: float, T: float,
                  history_at_t: RegimeHistory | None = None) -> float:
    """Forward price f_t^T of delivery at the single day T, observed at t.

    ``history_at_t`` is the regime state at the observation time; for t = 0
    it defaults to the context's valuation state."""
    if t < 0.0:
        raise ValueError("observation time must be nonnegative")
    if T < t:
        raise ValueError("delivery must not precede observation")
    history = ctx.history if history_at_t is None else history_at_t
    params = ctx.params
    row = chain_probs(params.transitions, math.floor(t), math.floor(T))[history.regime]
    mean, _ = anchored_base_moments(params.base, history, T, ctx.lam, now=t)
    return float(
        row[Regime.BASE] * mean
        + row[Regime.SPIKE] * params.spike.mean
        + row[Regime.DROP] * params.drop.mean
        + ctx.g_at(T)
    )


def forward_price_period(ctx: PricingContext, t: float, spec: DeliverySpec,
                         history_at_t: RegimeHistory | None = None) -> float:
    """Forward price of delivery over the window, observed at t."""
    if t > spec.t1:
        raise ValueError("observation must not be later than delivery start")
    history = ctx.history if history_at_t is None else history_at_t
    anchor = history.anchor_time(t)
    A, B = delivery_window_coefficients(ctx, t, spec, history.regime, anchor)
    return A * history.last_base_value + B


def forward_option(ctx: PricingContext, K: float, t: float, spec: DeliverySpec) -> float:
    """Discounted European call, maturity t, on the window forward.

    Valuation conditions on the regime state at day floor(t): if it is base,
    the forward is affine in the current base value; if it is a spike or a
    drop that has lasted k days, the forward is affine in the base value
    recorded one day after the last base day.  Each conditioning event has a
    Gaussian affine payoff priced in closed form; the mixture runs over k and
    the two non-base regimes.  Requires a base regime state at time 0.
    """
    if ctx.history.regime != Regime.BASE:
        raise ValueError("forward options require a base regime state at valuation")
    if t < 0.0:
        raise ValueError("option maturity must be nonnegative")
    if t > spec.t1:
        raise ValueError("option must mature before delivery starts")
    params = ctx.params
    base = params.base
    x0 = ctx.history.last_base_value
    t_floor = math.floor(t)
    total = 0.0

    prob_base = chain_probs(params.transitions, 0, t_floor)[Regime.BASE, Regime.BASE]
    if prob_base > 0.0:
        A, B = delivery_window_coefficients(ctx, t, spec, Regime.BASE, anchor=t)
        if A <= 0.0:
            raise InternalError("window forward does not increase in the base value")
        mean, var = base_conditional_moments(base, x0, 0.0, t, ctx.lam)
        total += prob_base * A * _base_call(mean, math.sqrt(var), (K - B) / A)

    for end_regime in (Regime.SPIKE, Regime.DROP):
        for k in range(1, t_floor + 1):
            weight = restricted_path_prob(params.transitions, t_floor, k, end_regime)
            if weight <= 0.0:
                continue
            anchor = float(t_floor - k + 1)
            A, B = delivery_window_coefficients(ctx, t, spec, end_regime, anchor)
            if A <= 0.0:
                raise InternalError("window forward does not increase in the base value")
            mean, var = base_conditional_moments(base, x0, 0.0, anchor, ctx.lam)
            total += weight * A * _base_call(mean, math.sqrt(var), (K - B) / A)

    return math.exp(-ctx.r * t) * total
