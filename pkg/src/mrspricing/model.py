"""Three-regime Markov switching model for electricity spot prices.

The stochastic component of the spot price follows a mean-reverting Gaussian
base regime, interrupted by shifted-lognormal spikes and inverted
shifted-lognormal drops.  An exogenous discrete-time Markov chain with a
periodic family of transition matrices selects the active regime at integer
times (days).  The base process evolves in continuous time underneath and
stays latent while a spike or drop is active.

This module holds the parameter containers, the regime-chain algebra, the
conditional moments of the base regime under both measures, expected spot
values, and single-path simulation.  Closed-form derivative prices live in
:mod:`mrspricing.pricing`; the Monte Carlo verification engine lives in
:mod:`mrspricing.mc`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum

import numpy as np
from scipy.integrate import quad
from scipy.signal import lfilter

__all__ = [
    "Regime",
    "TransitionSpec",
    "BaseParams",
    "SpikeParams",
    "DropParams",
    "ModelParams",
    "RegimeHistory",
    "MarketPriceOfRisk",
    "AffineMarketPriceOfRisk",
    "TabulatedMarketPriceOfRisk",
    "SimulatedPath",
    "n_step_probs",
    "chain_probs",
    "chain_probs_cumulative",
    "restricted_path_prob",
    "base_conditional_moments",
    "anchored_base_moments",
    "expected_spot",
    "as_seasonal_fn",
    "simulate_path",
]

_ROW_SUM_TOL = 1e-12
_MIN_BETA = 1e-12


class Regime(IntEnum):
    """Price regimes, ordered so they double as matrix indices."""

    BASE = 0
    SPIKE = 1
    DROP = 2

    @property
    def label(self) -> str:
        return self.name.lower()

    @classmethod
    def from_label(cls, text: str) -> "Regime":
        try:
            return cls[str(text).strip().upper()]
        except KeyError:
            raise ValueError(f"unknown regime label {text!r}") from None


@dataclass(frozen=True)
class TransitionSpec:
    """Periodic family of 3x3 row-stochastic matrices.

    ``matrices[k % period]`` governs the regime switch from day ``k`` to day
    ``k + 1``, with ``k`` counted from the valuation date.  A single matrix
    gives the homogeneous (period 1) chain.
    """

    matrices: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrices, dtype=float)
        if m.ndim == 2:
            m = m[np.newaxis, :, :]
        if m.ndim != 3 or m.shape[0] < 1 or m.shape[1:] != (3, 3):
            raise ValueError("transition matrices must form a (period, 3, 3) stack")
        if np.any(m < 0.0) or np.any(m > 1.0 + _ROW_SUM_TOL):
            raise ValueError("transition probabilities must lie in [0, 1]")
        if np.any(np.abs(m.sum(axis=2) - 1.0) > _ROW_SUM_TOL):
            raise ValueError("every transition-matrix row must sum to one")
        m.flags.writeable = False
        object.__setattr__(self, "matrices", m)

    @property
    def period(self) -> int:
        return self.matrices.shape[0]

    def matrix(self, k: int) -> np.ndarray:
        return self.matrices[int(k) % self.period]

    @classmethod
    def constant(cls, matrix) -> "TransitionSpec":
        return cls(np.asarray(matrix, dtype=float))

    def rotated(self, offset: int) -> "TransitionSpec":
        """Re-phase the family so slot 0 corresponds to day ``offset``."""
        idx = (np.arange(self.period) + int(offset)) % self.period
        return TransitionSpec(self.matrices[idx])


def n_step_probs(transitions: TransitionSpec, from_time: int, to_time: int) -> np.ndarray:
    """Inclusive product of the step matrices for days ``from_time .. to_time``.

    The result is the transition kernel from day ``from_time`` to day
    ``to_time + 1``.  Every row of the product is again a probability vector.
    """
    from_time, to_time = int(from_time), int(to_time)
    if from_time > to_time:
        raise ValueError("from_time must not exceed to_time")
    out = transitions.matrix(from_time).copy()
    for k in range(from_time + 1, to_time + 1):
        out = out @ transitions.matrix(k)
    return out


def chain_probs(transitions: TransitionSpec, start_day: int, end_day: int) -> np.ndarray:
    """Kernel ``P(R_end = j | R_start = i)`` between integer days.

    Equal days give the identity; otherwise this is the product of the
    ``end_day - start_day`` step matrices in between.
    """
    start_day, end_day = int(start_day), int(end_day)
    if end_day < start_day:
        raise ValueError("end_day must not precede start_day")
    if end_day == start_day:
        return np.eye(3)
    return n_step_probs(transitions, start_day, end_day - 1)


def chain_probs_cumulative(transitions: TransitionSpec, start_day: int, horizon: int) -> np.ndarray:
    """Stack of kernels from ``start_day`` to each of the next ``horizon`` days.

    ``out[j]`` equals ``chain_probs(transitions, start_day, start_day + j)``.
    """
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    out = np.empty((horizon + 1, 3, 3))
    out[0] = np.eye(3)
    for j in range(1, horizon + 1):
        out[j] = out[j - 1] @ transitions.matrix(start_day + j - 1)
    return out


def restricted_path_prob(transitions: TransitionSpec, t_floor: int, k: int, end_regime: Regime) -> float:
    """Probability that day ``t_floor`` sits in ``end_regime`` with the last
    base visit exactly ``k`` days earlier, starting from base at day 0.

    For ``k >= 1`` this is ``P(R_t = end, R_{t-1} != base, ..., R_{t-k+1} != base,
    R_{t-k} = base | R_0 = base)`` with ``end_regime`` a spike or drop.  The
    complementary ``k = 0`` case (day ``t_floor`` itself is base) is exposed
    with ``end_regime = Regime.BASE``.
    """
    t_floor, k = int(t_floor), int(k)
    if t_floor < 0:
        raise ValueError("t_floor must be nonnegative")
    if k == 0:
        if end_regime != Regime.BASE:
            raise ValueError("k = 0 is the stay-in-base case; end_regime must be BASE")
        return float(chain_probs(transitions, 0, t_floor)[Regime.BASE, Regime.BASE])
    if not 1 <= k <= t_floor:
        raise ValueError("lag k must satisfy 1 <= k <= t_floor")
    if end_regime == Regime.BASE:
        raise ValueError("end_regime must be SPIKE or DROP when k >= 1")
    m = t_floor - k
    prob_base = chain_probs(transitions, 0, m)[Regime.BASE, Regime.BASE]
    v = transitions.matrix(m)[Regime.BASE].copy()
    for day in range(m + 1, t_floor):
        v[Regime.BASE] = 0.0
        v = v @ transitions.matrix(day)
    return float(prob_base * v[end_regime])


@dataclass(frozen=True)
class BaseParams:
    """Mean-reverting base regime ``dX = (alpha - beta X) dt + sigma dW``."""

    alpha: float
    beta: float
    sigma: float

    def __post_init__(self):
        if not self.beta > _MIN_BETA:
            raise ValueError("mean-reversion speed beta must be positive")
        if self.sigma < 0.0:
            raise ValueError("sigma must be nonnegative")

    @property
    def mean_level(self) -> float:
        return self.alpha / self.beta

    @property
    def stationary_variance(self) -> float:
        return self.sigma**2 / (2.0 * self.beta)


@dataclass(frozen=True)
class SpikeParams:
    """Shifted lognormal spikes: ``log(X - shift) ~ N(mu, sigma^2)``."""

    mu: float
    sigma: float
    shift: float

    def __post_init__(self):
        if self.sigma < 0.0:
            raise ValueError("sigma must be nonnegative")

    @property
    def mean(self) -> float:
        return self.shift + math.exp(self.mu + 0.5 * self.sigma**2)


@dataclass(frozen=True)
class DropParams:
    """Inverted shifted lognormal drops: ``log(shift - X) ~ N(mu, sigma^2)``."""

    mu: float
    sigma: float
    shift: float

    def __post_init__(self):
        if self.sigma < 0.0:
            raise ValueError("sigma must be nonnegative")

    @property
    def mean(self) -> float:
        return self.shift - math.exp(self.mu + 0.5 * self.sigma**2)


@dataclass(frozen=True)
class ModelParams:
    base: BaseParams
    spike: SpikeParams
    drop: DropParams
    transitions: TransitionSpec

    def regime_mean(self, regime: Regime) -> float:
        if regime == Regime.SPIKE:
            return self.spike.mean
        if regime == Regime.DROP:
            return self.drop.mean
        return self.base.mean_level


@dataclass(frozen=True)
class RegimeHistory:
    """Regime state at a valuation instant.

    ``lag`` counts the days since the last base-regime day.  ``lag == 0``
    means the instant itself is a base day and ``last_base_value`` is the
    observed stochastic component.  For ``lag >= 1`` the value anchors the
    latent base process one day after that last base day, which is the value
    the process carries forward while a spike or drop run is active.
    """

    regime: Regime
    last_base_value: float
    lag: int = 0

    def __post_init__(self):
        if self.lag < 0:
            raise ValueError("lag must be nonnegative")
        if (self.lag == 0) != (self.regime == Regime.BASE):
            raise ValueError("lag 0 is equivalent to a base-regime valuation day")
        if not math.isfinite(self.last_base_value):
            raise ValueError("last_base_value must be finite")

    @classmethod
    def at_base(cls, value: float) -> "RegimeHistory":
        return cls(Regime.BASE, float(value), 0)

    def anchor_time(self, now: float = 0.0) -> float:
        """Time the stored base value refers to, relative to the same clock as ``now``."""
        return float(now) if self.lag == 0 else float(now) - (self.lag - 1)


class MarketPriceOfRisk:
    """Deterministic drift adjustment ``lambda(u)`` applied to the base regime
    under the pricing measure."""

    def value(self, u: float) -> float:
        raise NotImplementedError

    def ou_weighted_integral(self, beta: float, t_from: float, t_to: float) -> float:
        """``integral_{t_from}^{t_to} exp(-beta (t_to - u)) lambda(u) du``.

        Subclasses override this when a closed form exists; the default uses
        adaptive quadrature.
        """
        if t_to < t_from:
            raise ValueError("t_to must not precede t_from")
        if t_to == t_from:
            return 0.0
        val, _ = quad(
            lambda u: math.exp(-beta * (t_to - u)) * self.value(u),
            t_from,
            t_to,
            epsabs=1e-12,
            epsrel=1e-12,
            limit=500,
        )
        return val


@dataclass(frozen=True)
class AffineMarketPriceOfRisk(MarketPriceOfRisk):
    """``lambda(u) = lam1 * u + lam2`` with closed-form kernel integrals."""

    lam1: float
    lam2: float

    def value(self, u: float) -> float:
        return self.lam1 * u + self.lam2

    def ou_weighted_integral(self, beta: float, t_from: float, t_to: float) -> float:
        if t_to < t_from:
            raise ValueError("t_to must not precede t_from")
        tau = t_to - t_from
        decay = math.exp(-beta * tau)
        j0 = (1.0 - decay) / beta
        j1 = (t_to - t_from * decay) / beta - (1.0 - decay) / beta**2
        return self.lam1 * j1 + self.lam2 * j0


@dataclass(frozen=True)
class TabulatedMarketPriceOfRisk(MarketPriceOfRisk):
    """Piecewise-linear ``lambda`` through (time, value) knots.

    Values extrapolate flat outside the knot range; kernel integrals fall
    back to adaptive quadrature split at the knots.
    """

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.ndim != 1 or t.shape != v.shape or t.size < 2:
            raise ValueError("need matching 1-d arrays with at least two knots")
        if np.any(np.diff(t) <= 0):
            raise ValueError("knot times must be strictly increasing")
        t.flags.writeable = False
        v.flags.writeable = False
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    def value(self, u: float) -> float:
        return float(np.interp(u, self.times, self.values))

    def ou_weighted_integral(self, beta: float, t_from: float, t_to: float) -> float:
        if t_to < t_from:
            raise ValueError("t_to must not precede t_from")
        if t_to == t_from:
            return 0.0
        interior = [t for t in self.times if t_from < t < t_to]
        val, _ = quad(
            lambda u: math.exp(-beta * (t_to - u)) * self.value(u),
            t_from,
            t_to,
            points=interior or None,
            epsabs=1e-12,
            epsrel=1e-12,
            limit=500,
        )
        return val


def base_conditional_moments(base: BaseParams, x_from: float, t_from: float, t_to: float,
                             lam: MarketPriceOfRisk | None = None) -> tuple[float, float]:
    """Mean and variance of the base value at ``t_to`` given ``x_from`` at ``t_from``.

    With a market price of risk the mean picks up the pricing-measure drift
    correction ``- integral exp(-beta (t_to - u)) lambda(u) du`` over the full
    conditioning interval; the variance is unaffected.
    """
    if t_to < t_from:
        raise ValueError("t_to must not precede t_from")
    tau = t_to - t_from
    decay = math.exp(-base.beta * tau)
    mean = x_from * decay + base.mean_level * (1.0 - decay)
    if lam is not None:
        mean -= lam.ou_weighted_integral(base.beta, t_from, t_to)
    var = base.stationary_variance * (1.0 - math.exp(-2.0 * base.beta * tau))
    return mean, var


def anchored_base_moments(base: BaseParams, history: RegimeHistory, t: float,
                          lam: MarketPriceOfRisk | None = None, now: float = 0.0) -> tuple[float, float]:
    """Moments of the latent base value at ``t`` given the regime state at ``now``.

    The drift adjustment is active from time 0 onward only; an anchor in the
    past (negative time) first propagates under the actual drift up to 0.
    """
    anchor = history.anchor_time(now)
    if t < anchor:
        raise ValueError("t must not precede the anchor time")
    mean = float(history.last_base_value)
    start = anchor
    if lam is not None and anchor < 0.0:
        mean, _ = base_conditional_moments(base, mean, anchor, 0.0, None)
        start = 0.0
    mean, _ = base_conditional_moments(base, mean, start, t, lam)
    var = base.stationary_variance * (1.0 - math.exp(-2.0 * base.beta * (t - anchor)))
    return mean, var


def as_seasonal_fn(seasonal, valuation_date=None):
    """Normalize a seasonal argument to a day-offset -> value callable.

    Accepts ``None`` (identically zero), a plain callable on day offsets, or
    a fitted seasonal model exposing ``offset_function`` (which then needs
    the valuation date the offsets are counted from).
    """
    if seasonal is None:
        return lambda offsets: np.zeros_like(np.asarray(offsets, dtype=float))
    offset_fn = getattr(seasonal, "offset_function", None)
    if offset_fn is not None:
        if valuation_date is None:
            raise ValueError("a valuation date is required with a fitted seasonal model")
        return offset_fn(valuation_date)
    if callable(seasonal):
        return seasonal
    raise TypeError("seasonal must be None, a callable, or a fitted seasonal model")


def expected_spot(params: ModelParams, seasonal, history: RegimeHistory, t: float,
                  lam: MarketPriceOfRisk | None = None, valuation_date=None) -> float:
    """``E(P_t | F_0)`` under the actual (``lam=None``) or pricing measure.

    Mixes the anchored base expectation with the invariant spike and drop
    means using the regime probabilities at day ``floor(t)``, then adds the
    seasonal shape.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    g = as_seasonal_fn(seasonal, valuation_date)
    row = chain_probs(params.transitions, 0, math.floor(t))[history.regime]
    mean, _ = anchored_base_moments(params.base, history, t, lam)
    return float(
        row[Regime.BASE] * mean
        + row[Regime.SPIKE] * params.spike.mean
        + row[Regime.DROP] * params.drop.mean
        + np.asarray(g(t), dtype=float)
    )


@dataclass(frozen=True)
class SimulatedPath:
    """One simulated trajectory on the integer day grid.

    ``x`` is the stochastic spot component (base, spike or drop value per
    day), ``base`` the latent base process sampled at day marks, ``prices``
    the spot including the seasonal shape.  ``substeps`` records the
    intra-day resolution the base process was stepped at.
    """

    times: np.ndarray
    regimes: np.ndarray
    x: np.ndarray
    base: np.ndarray
    prices: np.ndarray
    substeps: int


def _daily_lambda_drift(base: BaseParams, lam, t0: float, n_steps: int, dt: float) -> np.ndarray:
    """Per-step drift increments ``-integral exp(-beta (end - u)) lambda(u) du``."""
    out = np.zeros(n_steps)
    if lam is None:
        return out
    starts = t0 + dt * np.arange(n_steps)
    if isinstance(lam, AffineMarketPriceOfRisk):
        beta = base.beta
        phi = math.exp(-beta * dt)
        out -= lam.lam1 * ((starts * (1.0 - phi) + dt) / beta - (1.0 - phi) / beta**2)
        out -= lam.lam2 * (1.0 - phi) / beta
        return out
    for i, s in enumerate(starts):
        out[i] = -lam.ou_weighted_integral(base.beta, s, s + dt)
    return out


def simulate_path(params: ModelParams, seasonal, history: RegimeHistory, horizon: int,
                  substeps: int = 1, lam: MarketPriceOfRisk | None = None, seed: int = 0,
                  valuation_date=None) -> SimulatedPath:
    """Simulate one trajectory over days ``0 .. horizon``.

    The regime chain switches at integer days using the periodic matrices.
    The base process evolves by its exact Gaussian transition per substep and
    keeps evolving (latently) during spike and drop days; spike and drop
    values are drawn i.i.d. from their shifted lognormal laws.  Passing a
    market price of risk simulates under the pricing measure, whose drift
    adjustment is active from time 0 onward.

    Draw order per path is fixed (chain uniforms, initial base value if the
    history starts off base, base increments, spike values, drop values), so
    equal seeds give bitwise-identical paths.
    """
    horizon = int(horizon)
    substeps = int(substeps)
    if horizon < 1:
        raise ValueError("horizon must be at least one day")
    if substeps < 1:
        raise ValueError("substeps must be positive")
    g = as_seasonal_fn(seasonal, valuation_date)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    trans = params.transitions
    period = trans.period
    rows = [tuple(tuple(float(p) for p in trans.matrix(k)[r]) for r in range(3)) for k in range(period)]

    uniforms = rng.random(horizon)
    regimes = np.empty(horizon + 1, dtype=np.int8)
    r = int(history.regime)
    regimes[0] = r
    for k in range(horizon):
        row = rows[k % period][r]
        u = uniforms[k]
        r = 0 if u < row[0] else (1 if u < row[0] + row[1] else 2)
        regimes[k + 1] = r

    if history.lag == 0:
        b0 = float(history.last_base_value)
    else:
        m0, v0 = anchored_base_moments(params.base, history, 0.0, None)
        b0 = m0 + math.sqrt(v0) * rng.standard_normal()

    dt = 1.0 / substeps
    beta = params.base.beta
    phi = math.exp(-beta * dt)
    n_sub = horizon * substeps
    shocks = params.base.mean_level * (1.0 - phi) + _daily_lambda_drift(params.base, lam, 0.0, n_sub, dt)
    sd_sub = math.sqrt(params.base.stationary_variance * (1.0 - phi * phi))
    shocks = shocks + sd_sub * rng.standard_normal(n_sub)
    bsub = lfilter([1.0], [1.0, -phi], shocks, zi=np.array([phi * b0]))[0]
    base = np.empty(horizon + 1)
    base[0] = b0
    base[1:] = bsub[substeps - 1 :: substeps]

    x = base.copy()
    spike_idx = np.flatnonzero(regimes == Regime.SPIKE)
    if spike_idx.size:
        x[spike_idx] = params.spike.shift + rng.lognormal(params.spike.mu, params.spike.sigma, spike_idx.size)
    drop_idx = np.flatnonzero(regimes == Regime.DROP)
    if drop_idx.size:
        x[drop_idx] = params.drop.shift - rng.lognormal(params.drop.mu, params.drop.sigma, drop_idx.size)

    times = np.arange(horizon + 1)
    prices = x + np.asarray(g(times), dtype=float)
    return SimulatedPath(times, regimes, x, base, prices, substeps)
