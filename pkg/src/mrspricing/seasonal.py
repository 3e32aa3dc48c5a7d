"""Deterministic seasonal structure of daily electricity prices.

The shape has three layers: a long-term trend built from two sinusoids with
linearly varying amplitude plus a quadratic polynomial, a weekly pattern of
average weekday effects (with holidays pooled into their own slot), and a
level shift chosen so that deseasonalizing preserves the sample minimum.
Trend time is measured in years of 365 days from the first observation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import date, timedelta

import numpy as np

from .errors import FitError

__all__ = [
    "DAYS_PER_YEAR",
    "HOLIDAY_SLOT",
    "SeasonalModel",
    "TrendFit",
    "trend_value",
    "fit_long_term",
    "fit_weekly",
    "deseasonalize",
    "reseasonalize",
    "fit_seasonal_model",
]

DAYS_PER_YEAR = 365.0
HOLIDAY_SLOT = 7
_TWO_PI = 2.0 * math.pi

_A3_STARTS = (0.0, 0.25)
_A6_STARTS = (0.3, 0.5, 0.8, 1.1, 1.5, 2.0, 2.5, 3.0)
_A7_STARTS = (0.0, 0.5)


def trend_value(a, t_years):
    """Long-term trend at ``t_years``: two amplitude-modulated sinusoids plus
    a quadratic polynomial, ten coefficients in total."""
    a = np.asarray(a, dtype=float)
    if a.shape != (10,):
        raise ValueError("trend needs exactly ten coefficients")
    t = np.asarray(t_years, dtype=float)
    s1 = np.sin(_TWO_PI * (t + a[2]))
    s2 = np.sin(_TWO_PI * a[5] * (t + a[6]))
    return (a[0] + a[1] * t) * s1 + (a[3] + a[4] * t) * s2 + a[7] + a[8] * t + a[9] * t * t


def _linear_design(t, a3, a6, a7):
    s1 = np.sin(_TWO_PI * (t + a3))
    s2 = np.sin(_TWO_PI * a6 * (t + a7))
    return np.column_stack([s1, t * s1, s2, t * s2, np.ones_like(t), t, t * t])


def _project_linear(t, y, a3, a6, a7):
    """Best coefficients for the seven linear parameters at fixed phases."""
    X = _linear_design(t, a3, a6, a7)
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    a = np.array([coef[0], coef[1], a3, coef[2], coef[3], a6, a7, coef[4], coef[5], coef[6]])
    r = X @ coef - y
    return a, float(r @ r)


def _residual_jacobian(t, y, a):
    arg1 = _TWO_PI * (t + a[2])
    arg2 = _TWO_PI * a[5] * (t + a[6])
    s1, c1 = np.sin(arg1), np.cos(arg1)
    s2, c2 = np.sin(arg2), np.cos(arg2)
    amp1 = a[0] + a[1] * t
    amp2 = a[3] + a[4] * t
    r = amp1 * s1 + amp2 * s2 + a[7] + a[8] * t + a[9] * t * t - y
    J = np.column_stack(
        [
            s1,
            t * s1,
            amp1 * _TWO_PI * c1,
            s2,
            t * s2,
            amp2 * c2 * _TWO_PI * (t + a[6]),
            amp2 * c2 * _TWO_PI * a[5],
            np.ones_like(t),
            t,
            t * t,
        ]
    )
    return r, J


def _levenberg_marquardt(t, y, a0, max_iter=200):
    """Damped Gauss-Newton descent; returns the accepted-SSE trace."""
    a = np.array(a0, dtype=float)
    r, J = _residual_jacobian(t, y, a)
    sse = float(r @ r)
    trace = [sse]
    mu = 1e-3
    for _ in range(max_iter):
        g = J.T @ r
        H = J.T @ J
        d = np.diag(H).copy()
        d[d <= 0.0] = 1.0
        improved = False
        for _ in range(25):
            try:
                step = np.linalg.solve(H + mu * np.diag(d), -g)
            except np.linalg.LinAlgError:
                mu *= 4.0
                continue
            cand = a + step
            rc, Jc = _residual_jacobian(t, y, cand)
            sse_c = float(rc @ rc)
            if math.isfinite(sse_c) and sse_c < sse:
                a, r, J = cand, rc, Jc
                rel_gain = (sse - sse_c) / max(sse, 1e-300)
                sse = sse_c
                trace.append(sse)
                mu = max(mu / 3.0, 1e-12)
                improved = True
                if rel_gain < 1e-14 or float(np.abs(step).max()) < 1e-13:
                    return a, sse, np.asarray(trace)
                break
            mu *= 4.0
            if mu > 1e14:
                return a, sse, np.asarray(trace)
        if not improved:
            break
    return a, sse, np.asarray(trace)


@dataclass(frozen=True)
class TrendFit:
    """Result of the long-term trend fit."""

    a: np.ndarray
    sse: float
    sse_trace: np.ndarray
    epoch: date


def _to_offsets(dates, epoch):
    return np.array([(d - epoch).days for d in dates], dtype=float)


def fit_long_term(dates, prices) -> TrendFit:
    """Fit the ten trend coefficients by damped Gauss-Newton least squares.

    Runs a deterministic grid of 32 starts over the two phases and the second
    frequency (the parameters the objective is multimodal in), solving the
    seven linear coefficients exactly at each start.  The best final SSE
    wins; near-ties go to the smallest fitted frequency.  The winner's
    accepted-step SSE trace is returned and is nonincreasing by construction.
    """
    dates = list(dates)
    y = np.asarray(prices, dtype=float)
    if len(dates) != y.size:
        raise ValueError("dates and prices must have equal length")
    if y.size < 2 * 365:
        raise ValueError("need at least two full years of daily observations")
    if not np.all(np.isfinite(y)):
        raise ValueError("prices must be finite")
    epoch = dates[0]
    t = _to_offsets(dates, epoch) / DAYS_PER_YEAR

    candidates = []
    for a6 in _A6_STARTS:
        for a3 in _A3_STARTS:
            for a7 in _A7_STARTS:
                a_init, _ = _project_linear(t, y, a3, a6, a7)
                a_fit, sse, trace = _levenberg_marquardt(t, y, a_init)
                if math.isfinite(sse):
                    candidates.append((sse, abs(float(a_fit[5])), a_fit, trace))
    if not candidates:
        raise FitError("trend fit failed from every start", best_sse=None)
    best_sse = min(c[0] for c in candidates)
    tol = 1e-9 * (1.0 + best_sse)
    near = [c for c in candidates if c[0] <= best_sse + tol]
    near.sort(key=lambda c: c[1])
    sse, _, a_fit, trace = near[0]
    return TrendFit(a=a_fit, sse=sse, sse_trace=trace, epoch=epoch)


def weekday_slot(d: date, holidays) -> int:
    """Pattern slot of a calendar day: Monday..Sunday are 0..6, holidays pool
    into the trailing slot regardless of weekday."""
    return HOLIDAY_SLOT if d in holidays else d.weekday()


def fit_weekly(dates, detrended, holidays=frozenset()) -> np.ndarray:
    """Average detrended value per weekday slot plus the holiday slot.

    A weekday slot with no observations is a fit error; a sample with no
    holidays simply leaves the holiday slot at zero.
    """
    values = np.asarray(detrended, dtype=float)
    slots = np.array([weekday_slot(d, holidays) for d in dates])
    pattern = np.zeros(8)
    for s in range(8):
        sel = slots == s
        if sel.any():
            pattern[s] = values[sel].mean()
        elif s != HOLIDAY_SLOT:
            raise FitError(f"no observations for weekday slot {s}")
    return pattern


@dataclass
class SeasonalModel:
    """Fitted seasonal shape ``g = trend + weekly pattern - shift``.

    ``epoch`` is the date the trend clock starts at; ``shift`` is set by
    :func:`deseasonalize` so that the deseasonalized series attains the same
    minimum as the raw one.
    """

    a: np.ndarray
    weekly: np.ndarray
    epoch: date
    holidays: frozenset = field(default_factory=frozenset)
    shift: float = 0.0

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=float)
        self.weekly = np.asarray(self.weekly, dtype=float)
        if self.a.shape != (10,):
            raise ValueError("trend needs exactly ten coefficients")
        if self.weekly.shape != (8,):
            raise ValueError("weekly pattern needs seven weekday slots plus a holiday slot")
        self.holidays = frozenset(self.holidays)

    def trend_at(self, dates):
        t = _to_offsets(dates, self.epoch) / DAYS_PER_YEAR
        return trend_value(self.a, t)

    def weekly_at(self, dates):
        return self.weekly[[weekday_slot(d, self.holidays) for d in dates]]

    def value(self, dates):
        """Seasonal component g on calendar dates."""
        return self.trend_at(dates) + self.weekly_at(dates) - self.shift

    def offset_function(self, origin: date):
        """Vectorized g as a function of (possibly fractional) day offsets
        counted from ``origin``.  The weekly slot is taken from the calendar
        day the offset falls in; the trend is evaluated at the exact time."""
        base_days = (origin - self.epoch).days

        def g(offsets):
            off = np.atleast_1d(np.asarray(offsets, dtype=float))
            t_years = (base_days + off) / DAYS_PER_YEAR
            days = np.floor(off).astype(int)
            slots = [weekday_slot(origin + timedelta(days=int(d)), self.holidays) for d in days]
            out = trend_value(self.a, t_years) + self.weekly[slots] - self.shift
            return out if np.ndim(offsets) else float(out[0])

        return g


def deseasonalize(dates, prices, model: SeasonalModel) -> np.ndarray:
    """Remove trend and weekly pattern, then add the level shift that makes
    ``min(output) == min(input)``.  The shift is stored on the model so that
    g and the deseasonalized series stay consistent."""
    p = np.asarray(prices, dtype=float)
    raw = p - model.trend_at(dates) - model.weekly_at(dates)
    model.shift = float(p.min() - raw.min())
    return raw + model.shift


def reseasonalize(dates, x, model: SeasonalModel) -> np.ndarray:
    """Inverse of :func:`deseasonalize` under the model's stored shift."""
    return np.asarray(x, dtype=float) + model.value(dates)


def fit_seasonal_model(dates, prices, holidays=frozenset()):
    """Full decomposition pipeline: trend on raw prices, weekly pattern on the
    detrended series, then the min-preserving shift.

    Returns ``(model, deseasonalized, trend_fit)``.
    """
    dates = list(dates)
    p = np.asarray(prices, dtype=float)
    fit = fit_long_term(dates, p)
    detrended = p - trend_value(fit.a, _to_offsets(dates, fit.epoch) / DAYS_PER_YEAR)
    weekly = fit_weekly(dates, detrended, holidays)
    model = SeasonalModel(a=fit.a, weekly=weekly, epoch=fit.epoch, holidays=frozenset(holidays))
    x = deseasonalize(dates, p, model)
    return model, x, fit
