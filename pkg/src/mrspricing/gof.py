"""Kolmogorov-Smirnov goodness-of-fit tests for the switching model.

Each regime's marginal is checked through its probability integral
transform: base observations are standardized by the predictive Gaussian
law of the filter (one-step forecast residuals), spike and drop
observations by their shifted lognormal distribution functions.  Two
empirical-distribution constructions are tested: ewedf assigns each day to
its most probable regime (probability above one half) with equal weights,
wedf lets every day contribute to every regime with its smoothed
probability as weight.  P-values come from simulating the weighted KS
statistic under the null of uniform transforms, holding the weight profile
fixed, with one child seed per replication.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .calibration import base_transition_sequence
from .model import ModelParams

__all__ = [
    "GofReport",
    "KsResult",
    "gof_report",
    "ks_ewedf",
    "ks_wedf",
    "regime_transforms",
    "weighted_ks_statistic",
]

_MIN_EFFECTIVE = 10.0
_REGIME_KEYS = ("base", "spike", "drop", "model")


@dataclass(frozen=True)
class KsResult:
    """One KS test: distance, simulated p-value and the weight behind it.

    ``conclusive`` is False when the effective sample size is below the
    reporting threshold; statistic and p-value are then NaN.
    """

    statistic: float
    p_value: float
    effective_obs: float
    conclusive: bool


@dataclass(frozen=True)
class GofReport:
    """Per-regime and whole-model tests for both weighting constructions.

    ``ewedf`` and ``wedf`` map the keys base, spike, drop, model to
    :class:`KsResult`.
    """

    ewedf: dict
    wedf: dict

    def rows(self):
        """Iterate (regime, ewedf result, wedf result) in report order."""
        for key in _REGIME_KEYS:
            yield key, self.ewedf[key], self.wedf[key]


def weighted_ks_statistic(pit, weights):
    """Sup distance between a weighted empirical CDF and the uniform CDF.

    ``pit`` holds probability-integral-transformed observations, ``weights``
    their nonnegative weights (any positive scale; only the profile
    matters).  The supremum is evaluated from both sides of every jump.
    """
    u = np.asarray(pit, dtype=float)
    w = np.asarray(weights, dtype=float)
    if u.shape != w.shape or u.ndim != 1 or u.size == 0:
        raise ValueError("pit and weights must be matching nonempty vectors")
    total = w.sum()
    if total <= 0.0:
        raise ValueError("weights must have positive total")
    order = np.argsort(u, kind="stable")
    uu = u[order]
    ww = w[order] / total
    cum = np.cumsum(ww)
    return float(np.max(np.maximum(cum - uu, uu - (cum - ww))))


def regime_transforms(data, params: ModelParams, initial=None) -> np.ndarray:
    """Per-day probability integral transforms under each regime, (n, 3).

    Column 0 standardizes the observation by the predictive base law given
    the past, columns 1 and 2 apply the spike and drop distribution
    functions.  Days outside a regime's support get transform 0 for the
    spike column and 1 for the drop column (the CDF value at the support
    edge).
    """
    x = np.asarray(data, dtype=float)
    m, s = base_transition_sequence(x, params, initial=initial)
    out = np.empty((x.size, 3))
    out[:, 0] = norm.cdf((x - m) / s)
    spike = params.spike
    with np.errstate(divide="ignore", invalid="ignore"):
        above = x > spike.shift
        out[:, 1] = np.where(
            above,
            norm.cdf((np.log(np.where(above, x - spike.shift, 1.0)) - spike.mu)
                     / spike.sigma),
            0.0,
        )
        drop = params.drop
        below = x < drop.shift
        out[:, 2] = np.where(
            below,
            1.0 - norm.cdf((np.log(np.where(below, drop.shift - x, 1.0))
                            - drop.mu) / drop.sigma),
            1.0,
        )
    return out


def _null_statistics(weights, reps, seed):
    w = np.asarray(weights, dtype=float)
    n = w.size
    total = w.sum()
    wn = w / total
    children = np.random.SeedSequence(seed).spawn(reps)
    out = np.empty(reps)
    for r in range(reps):
        u = np.random.default_rng(children[r]).random(n)
        order = np.argsort(u, kind="stable")
        uu = u[order]
        ww = wn[order]
        cum = np.cumsum(ww)
        out[r] = np.max(np.maximum(cum - uu, uu - (cum - ww)))
    return out


def _run_test(pit, weights, reps, seed):
    w = np.asarray(weights, dtype=float)
    effective = float(w.sum())
    if effective < _MIN_EFFECTIVE:
        return KsResult(statistic=math.nan, p_value=math.nan,
                          effective_obs=effective, conclusive=False)
    stat = weighted_ks_statistic(pit, w)
    null = _null_statistics(w, reps, seed)
    p = (1.0 + float(np.sum(null >= stat))) / (reps + 1.0)
    return KsResult(statistic=stat, p_value=p, effective_obs=effective,
                      conclusive=True)


def _validate(data, smoothed):
    x = np.asarray(data, dtype=float)
    g = np.asarray(smoothed, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise ValueError("data must be a nonempty one-dimensional series")
    if g.shape != (x.size, 3):
        raise ValueError("smoothed must have shape (len(data), 3)")
    if not np.all(np.isfinite(x)) or not np.all(np.isfinite(g)):
        raise ValueError("inputs contain non-finite values")
    return x, g


def ks_ewedf(data, smoothed, params: ModelParams, *, reps: int = 1000,
             seed: int = 0) -> dict:
    """KS tests with hard classification and equal weights.

    A day enters regime i's subsample when its smoothed probability exceeds
    one half; days without a majority regime are left out.  The whole-model
    test pools each classified day's own-regime transform.  Returns a dict
    keyed by base, spike, drop, model.
    """
    x, g = _validate(data, smoothed)
    pit = regime_transforms(x, params, initial=g[0])
    labels = np.argmax(g, axis=1)
    classified = g[np.arange(x.size), labels] > 0.5
    results = {}
    for i, key in enumerate(_REGIME_KEYS[:3]):
        mask = classified & (labels == i)
        w = mask.astype(float)
        results[key] = _run_test(pit[:, i], w, reps, seed)
    own = pit[np.arange(x.size), labels]
    results["model"] = _run_test(own, classified.astype(float), reps, seed)
    return results


def ks_wedf(data, smoothed, params: ModelParams, *, reps: int = 1000,
            seed: int = 0) -> dict:
    """KS tests weighting every day by its smoothed regime probability.

    Regime i's empirical CDF jumps by weight proportional to that day's
    probability of regime i; the whole-model test pools all (day, regime)
    transforms with those weights.  Returns a dict keyed by base, spike,
    drop, model.
    """
    x, g = _validate(data, smoothed)
    pit = regime_transforms(x, params, initial=g[0])
    results = {}
    for i, key in enumerate(_REGIME_KEYS[:3]):
        results[key] = _run_test(pit[:, i], g[:, i], reps, seed)
    results["model"] = _run_test(pit.ravel(), g.ravel(), reps, seed)
    return results


def gof_report(data, smoothed, params: ModelParams, *, reps: int = 1000,
               seed: int = 0) -> GofReport:
    """Both test families over all regimes and the pooled model."""
    return GofReport(
        ewedf=ks_ewedf(data, smoothed, params, reps=reps, seed=seed),
        wedf=ks_wedf(data, smoothed, params, reps=reps, seed=seed),
    )
