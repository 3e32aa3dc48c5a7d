"""Monte Carlo valuation engine used to verify the closed-form prices.

Paths are simulated under the pricing measure on the daily regime grid with
exact Gaussian transitions for the latent base value, so the only error is
statistical.  The engine is vectorized across paths with a fixed draw order
per day (chain uniforms, then base normals, then spike and drop lognormals
on recorded days), which makes every estimate reproducible bit for bit from
its seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InternalError
from .model import (
    ModelParams,
    Regime,
    RegimeHistory,
    anchored_base_moments,
)
from .pricing import (
    DeliverySpec,
    PricingContext,
    delivery_weights,
    delivery_window_coefficients,
)

__all__ = ["McEstimate", "mc_spot_option", "mc_forward_price", "mc_forward_option"]

_MIN_PATHS = 1000


@dataclass(frozen=True)
class McEstimate:
    """A Monte Carlo price with its sampling error."""

    value: float
    stderr: float
    n_paths: int
    seed: int


def _check_paths(n_paths: int):
    if n_paths < _MIN_PATHS:
        raise ValueError(f"need at least {_MIN_PATHS} paths for a usable estimate")


def _mean_stderr(samples: np.ndarray) -> tuple[float, float]:
    return float(samples.mean()), float(samples.std(ddof=1) / math.sqrt(samples.size))


def _init_states(ctx: PricingContext, t0: float, history: RegimeHistory,
                 n_paths: int, rng) -> tuple[np.ndarray, np.ndarray]:
    """Regimes and latent base values at the start time.

    A base state pins the latent value exactly; a spike or drop state only
    pins the value recorded one day after the last base day, so the current
    latent value is drawn from its Gaussian conditional law.
    """
    regimes = np.full(n_paths, int(history.regime), dtype=np.int64)
    if history.lag == 0:
        base = np.full(n_paths, float(history.last_base_value))
    else:
        mean, var = anchored_base_moments(ctx.params.base, history, t0, ctx.lam, now=t0)
        base = mean + math.sqrt(var) * rng.standard_normal(n_paths)
    return regimes, base


class _PathState:
    """Mutable per-path state advanced day by day."""

    def __init__(self, params: ModelParams, lam, regimes, base, t0: float, track: bool):
        self.params = params
        self.lam = lam
        self.regimes = regimes
        self.base = base
        self.time = float(t0)
        self.day = math.floor(t0)
        self.track = track
        n = regimes.size
        if track:
            self.run_len = np.zeros(n, dtype=np.int64)
            self.anchor_val = base.copy()
        self._cum = {}

    def _cum_rows(self, day: int) -> np.ndarray:
        key = day % self.params.transitions.period
        if key not in self._cum:
            self._cum[key] = np.cumsum(self.params.transitions.matrix(key), axis=1)
        return self._cum[key]

    def _base_step(self, t_to: float, rng):
        base_p = self.params.base
        dt = t_to - self.time
        phi = math.exp(-base_p.beta * dt)
        drift = base_p.mean_level * (1.0 - phi)
        if self.lam is not None:
            drift -= self.lam.ou_weighted_integral(base_p.beta, self.time, t_to)
        sd = math.sqrt(base_p.stationary_variance * (1.0 - phi * phi))
        self.base = self.base * phi + drift + sd * rng.standard_normal(self.base.size)

    def cross_day(self, rng):
        """Advance from the current time to the next integer day: chain
        transition first (fixed draw order), then the exact base step."""
        u = rng.random(self.regimes.size)
        rows = self._cum_rows(self.day)[self.regimes]
        new = (u[:, None] > rows[:, :2]).sum(axis=1)
        if self.track:
            entering = (self.regimes == Regime.BASE) & (new != Regime.BASE)
            staying_out = (self.regimes != Regime.BASE) & (new != Regime.BASE)
        self._base_step(float(self.day + 1), rng)
        if self.track:
            self.run_len[new == Regime.BASE] = 0
            self.run_len[staying_out] += 1
            self.run_len[entering] = 1
            self.anchor_val[entering] = self.base[entering]
        self.regimes = new
        self.day += 1
        self.time = float(self.day)

    def partial_step(self, t_to: float, rng):
        if t_to > self.time:
            self._base_step(t_to, rng)
            self.time = t_to

    def spot_prices(self, rng) -> np.ndarray:
        """Materialize spot prices at the current time: the latent base for
        base paths, fresh lognormal draws for spike and drop paths."""
        params = self.params
        x = self.base.copy()
        sm = self.regimes == Regime.SPIKE
        if sm.any():
            x[sm] = params.spike.shift + rng.lognormal(
                params.spike.mu, params.spike.sigma, int(sm.sum())
            )
        dm = self.regimes == Regime.DROP
        if dm.any():
            x[dm] = params.drop.shift - rng.lognormal(
                params.drop.mu, params.drop.sigma, int(dm.sum())
            )
        return x


def _run_to(state: _PathState, t_end: float, rng, record_days=(), on_record=None):
    """Advance the state to ``t_end``, invoking ``on_record(day, prices)`` at
    each requested integer day (including the start day when the simulation
    begins exactly on it)."""
    wanted = set(int(d) for d in record_days)
    if state.day in wanted and state.time == state.day:
        on_record(state.day, state.spot_prices(rng))
    while state.day + 1 <= math.floor(t_end):
        state.cross_day(rng)
        if state.day in wanted:
            on_record(state.day, state.spot_prices(rng))
    state.partial_step(t_end, rng)


def mc_spot_option(ctx: PricingContext, K: float, T: float, n_paths: int,
                   seed: int) -> McEstimate:
    """Discounted payoff mean of a European spot call over simulated paths."""
    if T <= 0.0:
        raise ValueError("option maturity must be positive")
    _check_paths(n_paths)
    rng = np.random.default_rng(seed)
    regimes, base = _init_states(ctx, 0.0, ctx.history, n_paths, rng)
    state = _PathState(ctx.params, ctx.lam, regimes, base, 0.0, track=False)
    _run_to(state, T, rng)
    spot = state.spot_prices(rng) + ctx.g_at(T)
    payoff = math.exp(-ctx.r * T) * np.maximum(spot - K, 0.0)
    value, stderr = _mean_stderr(payoff)
    return McEstimate(value=value, stderr=stderr, n_paths=n_paths, seed=seed)


def mc_forward_price(ctx: PricingContext, t: float, delivery, n_paths: int,
                     seed: int, history_at_t: RegimeHistory | None = None) -> McEstimate:
    """Forward price estimated as the mean simulated spot (single delivery
    day) or the weighted mean over a daily delivery window, conditioned on
    the regime state at the observation time."""
    _check_paths(n_paths)
    if t < 0.0:
        raise ValueError("observation time must be nonnegative")
    history = ctx.history if history_at_t is None else history_at_t
    rng = np.random.default_rng(seed)
    regimes, base = _init_states(ctx, t, history, n_paths, rng)
    state = _PathState(ctx.params, ctx.lam, regimes, base, t, track=False)

    if isinstance(delivery, DeliverySpec):
        if delivery.discretization != "daily":
            raise ValueError("Monte Carlo delivery windows use daily discretization")
        if t > delivery.t1:
            raise ValueError("observation must not be later than delivery start")
        days, weights = delivery_weights(delivery, ctx.r)
        acc = np.zeros(n_paths)
        w_by_day = {int(d): w for d, w in zip(days, weights)}

        def on_record(day, prices):
            np.add(acc, w_by_day[day] * (prices + ctx.g_at(float(day))), out=acc)

        _run_to(state, float(days[-1]), rng, record_days=days, on_record=on_record)
        value, stderr = _mean_stderr(acc)
    else:
        T = float(delivery)
        if T < t:
            raise ValueError("delivery must not precede observation")
        _run_to(state, T, rng)
        spot = state.spot_prices(rng) + ctx.g_at(T)
        value, stderr = _mean_stderr(spot)
    return McEstimate(value=value, stderr=stderr, n_paths=n_paths, seed=seed)


def _coefficient_table(ctx: PricingContext, t: float, spec: DeliverySpec):
    """A and B of the affine window forward for every conditioning event at
    maturity: base (run 0, anchored at t) and spike/drop runs of length k."""
    t_floor = math.floor(t)
    table = {}
    table[(int(Regime.BASE), 0)] = delivery_window_coefficients(
        ctx, t, spec, Regime.BASE, anchor=t
    )
    for regime in (Regime.SPIKE, Regime.DROP):
        for k in range(1, t_floor + 1):
            table[(int(regime), k)] = delivery_window_coefficients(
                ctx, t, spec, regime, anchor=float(t_floor - k + 1)
            )
    return table


def mc_forward_option(ctx: PricingContext, K: float, t: float, spec: DeliverySpec,
                      n_paths: int, seed: int, nested: bool = False,
                      n_inner: int = 64) -> McEstimate:
    """Discounted payoff mean of a call on the window forward.

    Simulates the regime path and latent base to the option maturity, then
    evaluates the forward by its closed-form conditional expectation (affine
    in the anchored base value).  ``nested=True`` replaces the closed form
    with a brute-force inner simulation of the delivery window, an audit mode
    that is slower and carries a small upward Jensen bias of order
    1/n_inner.
    """
    if ctx.history.regime != Regime.BASE:
        raise ValueError("forward options require a base regime state at valuation")
    if t < 0.0:
        raise ValueError("option maturity must be nonnegative")
    if t > spec.t1:
        raise ValueError("option must mature before delivery starts")
    _check_paths(n_paths)
    rng = np.random.default_rng(seed)
    regimes, base = _init_states(ctx, 0.0, ctx.history, n_paths, rng)
    state = _PathState(ctx.params, ctx.lam, regimes, base, 0.0, track=True)
    _run_to(state, t, rng)

    if nested:
        forwards = _nested_inner_forward(ctx, state, t, spec, n_inner, rng)
    else:
        table = _coefficient_table(ctx, t, spec)
        anchors = np.where(state.run_len == 0, state.base, state.anchor_val)
        forwards = np.empty(n_paths)
        filled = 0
        for (regime, k), (A, B) in table.items():
            sel = (state.regimes == regime) & (state.run_len == k)
            if sel.any():
                forwards[sel] = A * anchors[sel] + B
                filled += int(sel.sum())
        if filled != n_paths:
            raise InternalError("conditioning events failed to cover all paths")

    payoff = math.exp(-ctx.r * t) * np.maximum(forwards - K, 0.0)
    value, stderr = _mean_stderr(payoff)
    return McEstimate(value=value, stderr=stderr, n_paths=n_paths, seed=seed)


def _nested_inner_forward(ctx: PricingContext, state: _PathState, t: float,
                          spec: DeliverySpec, n_inner: int, rng) -> np.ndarray:
    """Brute-force window forward per outer path: replicate each time-t state
    n_inner times, simulate through the delivery window, and average the
    weighted spot."""
    if spec.discretization != "daily":
        raise ValueError("nested audit mode uses daily discretization")
    n_outer = state.regimes.size
    regimes = np.repeat(state.regimes, n_inner)
    base = np.repeat(state.base, n_inner)
    inner = _PathState(ctx.params, ctx.lam, regimes, base, t, track=False)
    days, weights = delivery_weights(spec, ctx.r)
    acc = np.zeros(n_outer * n_inner)
    w_by_day = {int(d): w for d, w in zip(days, weights)}

    def on_record(day, prices):
        np.add(acc, w_by_day[day] * (prices + ctx.g_at(float(day))), out=acc)

    _run_to(inner, float(days[-1]), rng, record_days=days, on_record=on_record)
    return acc.reshape(n_outer, n_inner).mean(axis=1)
