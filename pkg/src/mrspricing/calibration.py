"""EM calibration of the three-regime switching model.

The estimator alternates a forward-backward smoothing pass over the regime
chain with closed-form weighted parameter updates.  The base regime is a
discretely observed Vasicek process whose value is hidden on spike and drop
days, so the smoother tracks the regime jointly with the number of days
since the base value was last seen; a base observation after a run of k
off-base days is scored against the (k+1)-step Vasicek transition from the
observation that opened the run.  Spike and drop days are i.i.d. shifted
lognormals, so their updates are plain weighted moment estimates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.optimize import minimize_scalar

from .errors import CalibrationError, InternalError
from .model import (
    BaseParams,
    DropParams,
    ModelParams,
    SpikeParams,
    TransitionSpec,
)

__all__ = [
    "CalibrationResult",
    "EmConfig",
    "base_transition_sequence",
    "em_calibrate",
    "quartile_shifts",
    "smoothed_probabilities",
]

_INIT_SIGMA_FLOOR = 0.1
_SLOPE_EPS = 1e-6
# longest off-base run tracked exactly; longer runs use the stationary law
_RUN_CAP = 40


def quartile_shifts(data) -> tuple[float, float]:
    """Spike and drop shift levels: first and third quartile of ``data``.

    Quantiles interpolate linearly between order statistics.
    """
    x = np.asarray(data, dtype=float)
    if x.size == 0:
        raise ValueError("cannot take quartiles of an empty series")
    if not np.all(np.isfinite(x)):
        raise ValueError("series contains non-finite values")
    q1, q3 = np.quantile(x, [0.25, 0.75])
    return float(q1), float(q3)


@dataclass(frozen=True)
class EmConfig:
    """Settings for :func:`em_calibrate`.

    ``tol`` is the log-likelihood gain below which iteration stops,
    ``min_sigma`` the floor applied to every estimated standard deviation,
    and ``shrink_count`` the expected per-slot transition count below which
    per-slot rows are shrunk toward the pooled matrix.
    """

    tol: float = 1e-6
    max_iter: int = 500
    min_sigma: float = 1e-8
    shrink_count: float = 5.0

    def __post_init__(self):
        if self.tol <= 0.0 or self.min_sigma <= 0.0:
            raise ValueError("tol and min_sigma must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.shrink_count < 0.0:
            raise ValueError("shrink_count must be nonnegative")


@dataclass(frozen=True)
class CalibrationResult:
    """Fitted parameters plus per-day diagnostics.

    ``smoothed[t, i]`` is P(regime i on day t | all observations), each row
    summing to one.  ``classification`` is the per-day argmax of ``smoothed``.
    ``loglik_trace`` holds the accepted log-likelihood after each iteration
    and is nondecreasing.  ``initial_distribution`` is the fitted day-0
    regime distribution.
    """

    params: ModelParams
    smoothed: np.ndarray
    loglik_trace: np.ndarray
    classification: np.ndarray
    initial_distribution: np.ndarray


@njit(cache=True)
def _filter_smoother(x, c_s, c_d, mu_s, sig_s, mu_d, sig_d,
                     alpha, beta, sig_b, mats, pi0, cap):
    """One forward-backward pass over the lag-augmented regime chain.

    The base value is observed whenever the chain sits in the base regime,
    so conditioning on the number of days since the last base day pins the
    latent base value to a known observation.  The chain state is therefore
    augmented to (regime, days since base), giving exact inference: a base
    day following a run of length k is scored against the (k+1)-step
    Vasicek transition from the observation just before the run.  Runs
    longer than ``cap`` days (and runs starting before the sample) fall
    into a stationary-law bucket, which truncates path dependence at a
    geometrically negligible tail.

    State layout: index 0 is the base state, 1..cap are spike states with
    lag 1..cap, cap+1..2*cap the drop states likewise.

    Returns the log-likelihood, smoothed regime probabilities, expected
    regime-transition counts per period slot, the expected probability of
    consecutive base days (the regression weights) and the predictive mean
    and variance a base observation is scored against per day.
    """
    n = x.shape[0]
    period = mats.shape[0]
    ml = alpha / beta
    phi = math.exp(-beta)
    stat_var = sig_b * sig_b / (2.0 * beta)
    root_2pi = math.sqrt(2.0 * math.pi)
    n_states = 2 * cap + 1

    em_s = np.zeros(n)
    em_d = np.zeros(n)
    for t in range(n):
        if x[t] > c_s:
            y = math.log(x[t] - c_s)
            zs = (y - mu_s) / sig_s
            em_s[t] = math.exp(-0.5 * zs * zs) / (root_2pi * sig_s * (x[t] - c_s))
        if x[t] < c_d:
            y = math.log(c_d - x[t])
            zd = (y - mu_d) / sig_d
            em_d[t] = math.exp(-0.5 * zd * zd) / (root_2pi * sig_d * (c_d - x[t]))

    # eb[t, k]: density of a base observation at t after a run of length k,
    # anchored at x[t - 1 - k]; column cap (or anchors before the sample)
    # holds the stationary law.
    eb = np.zeros((n, cap + 1))
    for t in range(n):
        for k in range(cap + 1):
            anchor = t - 1 - k
            if k == cap or anchor < 0:
                mean = ml
                var = stat_var
            else:
                decay = phi ** (k + 1)
                mean = ml + decay * (x[anchor] - ml)
                var = stat_var * (1.0 - decay * decay)
            z = x[t] - mean
            dens = math.exp(-0.5 * z * z / var) / (root_2pi * math.sqrt(var))
            if dens < 1e-300:
                dens = 1e-300
            eb[t, k] = dens

    af = np.zeros((n, n_states))
    scale = np.zeros(n)

    af[0, 0] = pi0[0] * eb[0, cap]
    af[0, cap] = pi0[1] * em_s[0]
    af[0, 2 * cap] = pi0[2] * em_d[0]
    c = 0.0
    for idx in range(n_states):
        c += af[0, idx]
    if c < 1e-300:
        c = 1e-300
    scale[0] = c
    for idx in range(n_states):
        af[0, idx] /= c

    for t in range(1, n):
        p = mats[(t - 1) % period]
        for idx in range(n_states):
            af[t, idx] = 0.0
        for idx in range(n_states):
            a = af[t - 1, idx]
            if a == 0.0:
                continue
            if idx == 0:
                j = 0
                k = 0
            elif idx <= cap:
                j = 1
                k = idx
            else:
                j = 2
                k = idx - cap
            kn = k + 1 if k + 1 < cap else cap
            af[t, 0] += a * p[j, 0] * eb[t, k]
            af[t, kn] += a * p[j, 1] * em_s[t]
            af[t, cap + kn] += a * p[j, 2] * em_d[t]
        c = 0.0
        for idx in range(n_states):
            c += af[t, idx]
        if c < 1e-300:
            c = 1e-300
        scale[t] = c
        for idx in range(n_states):
            af[t, idx] /= c

    bk_next = np.ones(n_states)
    bk_cur = np.ones(n_states)
    gamma = np.zeros((n, 3))
    xi = np.zeros((period, 3, 3))
    w_re = np.zeros((n, cap + 1))
    m_pred = np.zeros(n)
    v_pred = np.zeros(n)

    for idx in range(n_states):
        regime = 0 if idx == 0 else (1 if idx <= cap else 2)
        gamma[n - 1, regime] += af[n - 1, idx]
    tot = gamma[n - 1, 0] + gamma[n - 1, 1] + gamma[n - 1, 2]
    for i in range(3):
        gamma[n - 1, i] /= tot

    for t in range(n - 2, -1, -1):
        p = mats[t % period]
        cn = scale[t + 1]
        slot = t % period
        for idx in range(n_states):
            if idx == 0:
                j = 0
                k = 0
            elif idx <= cap:
                j = 1
                k = idx
            else:
                j = 2
                k = idx - cap
            kn = k + 1 if k + 1 < cap else cap
            to_b = p[j, 0] * eb[t + 1, k] * bk_next[0]
            to_s = p[j, 1] * em_s[t + 1] * bk_next[kn]
            to_d = p[j, 2] * em_d[t + 1] * bk_next[cap + kn]
            bk_cur[idx] = (to_b + to_s + to_d) / cn
            a = af[t, idx]
            if a > 0.0:
                xi[slot, j, 0] += a * to_b / cn
                xi[slot, j, 1] += a * to_s / cn
                xi[slot, j, 2] += a * to_d / cn
                w_re[t + 1, k] += a * to_b / cn
        g0 = 0.0
        g1 = 0.0
        g2 = 0.0
        g0 = af[t, 0] * bk_cur[0]
        for idx in range(1, cap + 1):
            g1 += af[t, idx] * bk_cur[idx]
        for idx in range(cap + 1, n_states):
            g2 += af[t, idx] * bk_cur[idx]
        tot = g0 + g1 + g2
        gamma[t, 0] = g0 / tot
        gamma[t, 1] = g1 / tot
        gamma[t, 2] = g2 / tot
        for idx in range(n_states):
            bk_next[idx] = bk_cur[idx]
    w_re[0, cap] = gamma[0, 0]

    # predictive law a base observation is scored against, mixing run
    # lengths by filtered weight times the into-base transition probability
    m_pred[0] = ml
    v_pred[0] = stat_var
    for t in range(1, n):
        p = mats[(t - 1) % period]
        wtot = 0.0
        m1 = 0.0
        m2 = 0.0
        for idx in range(n_states):
            a = af[t - 1, idx]
            if a == 0.0:
                continue
            if idx == 0:
                j = 0
                k = 0
            elif idx <= cap:
                j = 1
                k = idx
            else:
                j = 2
                k = idx - cap
            anchor = t - 1 - k
            if k == cap or anchor < 0:
                mean = ml
                var = stat_var
            else:
                decay = phi ** (k + 1)
                mean = ml + decay * (x[anchor] - ml)
                var = stat_var * (1.0 - decay * decay)
            w = a * p[j, 0]
            wtot += w
            m1 += w * mean
            m2 += w * (var + mean * mean)
        if wtot <= 0.0:
            m_pred[t] = ml
            v_pred[t] = stat_var
        else:
            m1 /= wtot
            m_pred[t] = m1
            v_pred[t] = m2 / wtot - m1 * m1

    loglik = 0.0
    for t in range(n):
        loglik += math.log(scale[t])
    return loglik, gamma, xi, w_re, m_pred, v_pred


def _run_pass(x, params: ModelParams, pi0: np.ndarray):
    mats = np.ascontiguousarray(params.transitions.matrices, dtype=float)
    return _filter_smoother(
        x,
        params.spike.shift,
        params.drop.shift,
        params.spike.mu,
        params.spike.sigma,
        params.drop.mu,
        params.drop.sigma,
        params.base.alpha,
        params.base.beta,
        params.base.sigma,
        mats,
        np.asarray(pi0, dtype=float),
        _RUN_CAP,
    )


def _weighted_lognormal(values, weights, floor):
    total = float(weights.sum())
    if total <= 0.0:
        return None
    y = np.log(values)
    mu = float((weights * y).sum() / total)
    var = float((weights * (y - mu) ** 2).sum() / total)
    return mu, max(math.sqrt(var), floor)


def _base_design(x, cap):
    """Static design arrays for the base-regime update.

    Each base observation enters the complete-data likelihood as a Gaussian
    around the decayed anchor ``ml + d (x_a - ml)`` with variance
    ``V (1 - d^2)``, where ``d = phi^(k+1)`` and ``k`` is the run length it
    closes.  Flattening over (day, run length) gives observation, anchor and
    step-count vectors; runs longer than ``cap`` days and the first day are
    scored against the stationary law and only need the observation.
    """
    n = x.size
    obs, anc, steps = [], [], []
    for k in range(cap):
        obs.append(x[k + 1:])
        anc.append(x[: n - 1 - k])
        steps.append(np.full(n - 1 - k, k + 1.0))
    return (
        np.concatenate(obs),
        np.concatenate(anc),
        np.concatenate(steps),
    )


def _flatten_weights(w_re, cap):
    parts = [w_re[k + 1:, k] for k in range(cap)]
    return np.concatenate(parts), w_re[:, cap]


def _base_mle(x, design, w_re, cap, prev: BaseParams, floor):
    """Exact weighted likelihood update of the base-regime parameters.

    For a fixed one-day decay ``phi`` the mean level and stationary variance
    have closed-form generalized-least-squares solutions, so the update
    profiles them out and maximizes the remaining one-dimensional function
    of ``phi`` by a grid scan refined with a bounded scalar search.
    """
    obs, anc, steps = design
    wt, wt_st = _flatten_weights(w_re, cap)
    total = float(wt.sum() + wt_st.sum())
    if total <= 0.0:
        return prev
    keep = wt > 1e-15 * total
    obs, anc, steps, wt = obs[keep], anc[keep], steps[keep], wt[keep]

    sw_st = float(wt_st.sum())
    sy_st = float((wt_st * x).sum())
    syy_st = float((wt_st * x * x).sum())

    def profile(phi):
        d = phi**steps
        c = 1.0 - d * d
        h = 1.0 - d
        y = obs - d * anc
        a_sum = float((wt * h * h / c).sum()) + sw_st
        b_sum = float((wt * h * y / c).sum()) + sy_st
        ml = b_sum / a_sum
        r = y - ml * h
        rss = float((wt * r * r / c).sum()) + syy_st - 2.0 * ml * sy_st + ml * ml * sw_st
        v = max(rss / total, 1e-300)
        logc = float((wt * np.log(c)).sum())
        return 0.5 * (total * math.log(v) + logc), ml, v

    lo, hi = _SLOPE_EPS, 1.0 - _SLOPE_EPS
    grid = np.linspace(lo, hi, 41)
    vals = np.array([profile(p)[0] for p in grid])
    best = int(np.argmin(vals))
    b_lo = grid[max(best - 1, 0)]
    b_hi = grid[min(best + 1, grid.size - 1)]
    res = minimize_scalar(lambda p: profile(p)[0], bounds=(b_lo, b_hi),
                          method="bounded", options={"xatol": 1e-12})
    phi = float(res.x)
    if profile(phi)[0] > vals[best]:
        phi = float(grid[best])
    _, ml, v = profile(phi)
    beta = -math.log(phi)
    alpha = ml * beta
    sigma = max(math.sqrt(max(v * 2.0 * beta, 0.0)), floor)
    return BaseParams(alpha=alpha, beta=beta, sigma=sigma)


def _transition_update(xi, prev_mats, shrink_count):
    """Row-wise per-slot estimates shrunk toward the pooled matrix."""
    period = xi.shape[0]
    pooled = xi.sum(axis=0)
    pooled_rows = pooled.sum(axis=1)
    mats = np.empty((period, 3, 3))
    for i in range(3):
        if pooled_rows[i] > 0.0:
            pooled_row = pooled[i] / pooled_rows[i]
        else:
            pooled_row = None
        for s in range(period):
            if pooled_row is None:
                row = prev_mats[s, i].copy()
            else:
                count = float(xi[s, i].sum())
                if count <= 0.0:
                    row = pooled_row.copy()
                else:
                    w = min(count / shrink_count, 1.0) if shrink_count > 0 else 1.0
                    row = w * (xi[s, i] / count) + (1.0 - w) * pooled_row
            mats[s, i] = row / row.sum()
    return mats


def _maximize(x, design, gamma, xi, w_re, params: ModelParams, config: EmConfig):
    c_s = params.spike.shift
    c_d = params.drop.shift

    spike_mask = x > c_s
    spike_fit = _weighted_lognormal(
        np.where(spike_mask, x - c_s, 1.0),
        gamma[:, 1] * spike_mask,
        config.min_sigma,
    )
    if spike_fit is None:
        spike = params.spike
    else:
        spike = SpikeParams(mu=spike_fit[0], sigma=spike_fit[1], shift=c_s)

    drop_mask = x < c_d
    drop_fit = _weighted_lognormal(
        np.where(drop_mask, c_d - x, 1.0),
        gamma[:, 2] * drop_mask,
        config.min_sigma,
    )
    if drop_fit is None:
        drop = params.drop
    else:
        drop = DropParams(mu=drop_fit[0], sigma=drop_fit[1], shift=c_d)

    base = _base_mle(x, design, w_re, _RUN_CAP, params.base, config.min_sigma)
    mats = _transition_update(xi, params.transitions.matrices, config.shrink_count)
    new = ModelParams(base=base, spike=spike, drop=drop,
                      transitions=TransitionSpec(mats))
    pi0 = gamma[0].copy()
    return new, pi0


def _initial_guess(x, c_s, c_d, period):
    """Deterministic starting point from a quartile outlier rule."""
    n = x.size
    q1, q3 = np.quantile(x, [0.25, 0.75])
    iqr = q3 - q1
    labels = np.zeros(n, dtype=np.int8)
    labels[x > c_s + 1.5 * iqr] = 1
    labels[x < c_d - 1.5 * iqr] = 2

    spike_obs = x[(labels == 1) & (x > c_s)]
    if spike_obs.size == 0:
        spike_obs = x[x > c_s]
    ys = np.log(spike_obs - c_s)
    spike = SpikeParams(
        mu=float(ys.mean()),
        sigma=max(float(ys.std()), _INIT_SIGMA_FLOOR),
        shift=c_s,
    )

    drop_obs = x[(labels == 2) & (x < c_d)]
    if drop_obs.size == 0:
        drop_obs = x[x < c_d]
    yd = np.log(c_d - drop_obs)
    drop = DropParams(
        mu=float(yd.mean()),
        sigma=max(float(yd.std()), _INIT_SIGMA_FLOOR),
        shift=c_d,
    )

    base_vals = x[labels == 0]
    if base_vals.size == 0:
        base_vals = x
    pair = (labels[:-1] == 0) & (labels[1:] == 0)
    u = x[:-1][pair]
    y = x[1:][pair]
    slope = float("nan")
    if u.size >= 10 and u.std() > 0.0:
        slope = float(np.cov(u, y, bias=True)[0, 1] / u.var())
    if not (math.isfinite(slope) and _SLOPE_EPS < slope < 1.0 - _SLOPE_EPS):
        slope = math.exp(-0.2)
        intercept = float(base_vals.mean()) * (1.0 - slope)
        noise = max(float(base_vals.var()), 1e-4) * (1.0 - slope * slope)
    else:
        intercept = float(y.mean() - slope * u.mean())
        resid = y - intercept - slope * u
        noise = max(float(resid.var()), 1e-8)
    beta = -math.log(slope)
    alpha = intercept * beta / (1.0 - slope)
    sigma = math.sqrt(noise * 2.0 * beta / (1.0 - slope * slope))
    base = BaseParams(alpha=alpha, beta=beta, sigma=sigma)

    mat = np.full((3, 3), 0.05)
    np.fill_diagonal(mat, 0.9)
    mats = np.repeat(mat[np.newaxis], period, axis=0)

    pi0 = np.full(3, 0.01)
    pi0[labels[0]] = 0.98

    params = ModelParams(base=base, spike=spike, drop=drop,
                         transitions=TransitionSpec(mats))
    return params, pi0


def em_calibrate(data, shifts, transition_period: int = 1,
                 config: EmConfig | None = None) -> CalibrationResult:
    """Fit the three-regime model to a deseasonalized daily series.

    ``shifts`` is the ``(c_s, c_d)`` pair of spike and drop levels, usually
    from :func:`quartile_shifts`.  ``transition_period`` sets how many
    distinct transition matrices repeat over the calendar (1 gives a
    homogeneous chain, 7 a weekly pattern).  Starting values come from a
    deterministic outlier rule, so equal inputs give identical results.

    Iteration stops when the log-likelihood gain drops below ``config.tol``
    or after ``config.max_iter`` rounds.  The reported trace contains only
    accepted steps and is nondecreasing; a material decrease raises
    :class:`InternalError` since the update should never lose likelihood.
    """
    if config is None:
        config = EmConfig()
    x = np.asarray(data, dtype=float)
    if x.ndim != 1:
        raise ValueError("data must be a one-dimensional series")
    if x.size < 100:
        raise ValueError("calibration needs at least 100 observations")
    if not np.all(np.isfinite(x)):
        raise ValueError("series contains non-finite values")
    c_s, c_d = float(shifts[0]), float(shifts[1])
    period = int(transition_period)
    if period < 1:
        raise ValueError("transition_period must be at least 1")
    if not np.any(x > c_s):
        raise CalibrationError(
            f"no observations above the spike shift {c_s:g}; "
            "the spike regime cannot be estimated"
        )
    if not np.any(x < c_d):
        raise CalibrationError(
            f"no observations below the drop shift {c_d:g}; "
            "the drop regime cannot be estimated"
        )

    params, pi0 = _initial_guess(x, c_s, c_d, period)
    design = _base_design(x, _RUN_CAP)
    trace: list[float] = []
    accepted = None

    for _ in range(config.max_iter):
        loglik, gamma, xi, w_re, _, _ = _run_pass(x, params, pi0)
        if accepted is not None:
            gain = loglik - accepted[0]
            guard = config.tol + 1e-9 * abs(accepted[0])
            if gain < -guard:
                raise InternalError(
                    f"log-likelihood fell by {-gain:.3e} in one update; "
                    "the ascent property is violated"
                )
            if gain < 0.0:
                break
        else:
            gain = math.inf
        accepted = (loglik, params, pi0, gamma)
        trace.append(loglik)
        if gain < config.tol:
            break
        params, pi0 = _maximize(x, design, gamma, xi, w_re, params, config)

    loglik, params, pi0, gamma = accepted
    return CalibrationResult(
        params=params,
        smoothed=gamma,
        loglik_trace=np.asarray(trace),
        classification=np.argmax(gamma, axis=1).astype(np.int8),
        initial_distribution=np.asarray(pi0, dtype=float),
    )


def smoothed_probabilities(data, params: ModelParams,
                           initial=None) -> np.ndarray:
    """Per-day regime probabilities given all observations, for fixed params.

    ``initial`` is the day-0 regime distribution (uniform when omitted).
    """
    x = np.asarray(data, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise ValueError("data must be a nonempty one-dimensional series")
    if not np.all(np.isfinite(x)):
        raise ValueError("series contains non-finite values")
    pi0 = np.full(3, 1.0 / 3.0) if initial is None else np.asarray(initial, float)
    _, gamma, _, _, _, _ = _run_pass(x, params, pi0)
    return gamma


def base_transition_sequence(data, params: ModelParams,
                             initial=None) -> tuple[np.ndarray, np.ndarray]:
    """Predictive mean and standard deviation of the base value per day.

    Day ``t``'s pair conditions on observations up to ``t - 1`` and on the
    chain arriving in the base regime at ``t``, mixing over the possible
    run lengths since the last base day; day 0 uses the stationary law.
    These are the moments a base-regime observation on day ``t`` is scored
    against, so base residuals standardized by them are one-step forecast
    errors.
    """
    x = np.asarray(data, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise ValueError("data must be a nonempty one-dimensional series")
    if not np.all(np.isfinite(x)):
        raise ValueError("series contains non-finite values")
    pi0 = np.full(3, 1.0 / 3.0) if initial is None else np.asarray(initial, float)
    _, _, _, _, m_pred, v_pred = _run_pass(x, params, pi0)
    return m_pred, np.sqrt(v_pred)
