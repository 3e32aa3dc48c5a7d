"""Risk premia implied by forward quotes and calibration of the market
price of risk.

The risk premium at maturity t is the physical-measure expected spot minus
the market forward price.  For a delivery window it is the arithmetic mean
of the daily expected spots minus the quoted period price, with the sum
running over integer delivery days.  Under an affine market price of risk
the model premium is linear in the two coefficients, so fitting them to a
set of quotes is a two-column linear least-squares problem.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import FitError
from .model import (
    AffineMarketPriceOfRisk,
    ModelParams,
    Regime,
    RegimeHistory,
    chain_probs,
    expected_spot,
)

__all__ = [
    "ForwardQuote",
    "LambdaFit",
    "window_offsets",
    "risk_premium_point",
    "risk_premium_period",
    "lambda_design_row",
    "fit_lambda",
]


@dataclass(frozen=True)
class ForwardQuote:
    """A quoted forward contract.

    ``t1`` and ``t2`` are the delivery window bounds in days from the
    valuation date; ``settlement`` records whether the quote pays at the end
    of delivery (``at_maturity``) or continuously (``instant``).  The risk
    premium computations below always use the arithmetic-mean day convention;
    the settlement tag matters when the quote is reproduced with a
    discounted-weight period forward.
    """

    label: str
    price: float
    t1: float
    t2: float
    settlement: str = "at_maturity"

    def __post_init__(self):
        if not math.isfinite(self.price):
            raise ValueError("quote price must be finite")
        if self.t2 < self.t1:
            raise ValueError("delivery window must have t1 <= t2")
        if self.settlement not in ("at_maturity", "instant"):
            raise ValueError(f"unknown settlement convention {self.settlement!r}")


def window_offsets(t1, t2) -> np.ndarray:
    """Integer delivery days covered by the window [t1, t2], inclusive."""
    lo = int(math.ceil(t1 - 1e-9))
    hi = int(math.floor(t2 + 1e-9))
    if hi < lo:
        raise ValueError("delivery window contains no integer day")
    return np.arange(lo, hi + 1)


def risk_premium_point(params, seasonal, history, t, f0t) -> float:
    """Premium E(P_t | F_0) - f0t of a single-maturity forward quote."""
    if t <= 0.0:
        raise ValueError("maturity must be positive")
    return expected_spot(params, seasonal, history, t) - f0t


def risk_premium_period(params, seasonal, history, quote: ForwardQuote) -> float:
    """Premium of a delivery-window quote: the arithmetic mean of the daily
    expected spots over the window minus the quoted price."""
    days = window_offsets(quote.t1, quote.t2)
    mean = np.mean([expected_spot(params, seasonal, history, float(t)) for t in days])
    return float(mean - quote.price)


def lambda_design_row(params: ModelParams, history: RegimeHistory, t1, t2) -> np.ndarray:
    """Coefficients of (lambda1, lambda2) in the model risk premium of a
    delivery window.

    For each integer delivery day the premium contributed by an affine
    market price of risk is p_b(t) * [l1*(t - (1-e^{-bt})/b) + l2*(1-e^{-bt})] / b,
    where p_b(t) is the probability of being in the base regime at day t
    given the time-0 state; the row averages these over the window.
    """
    beta = params.base.beta
    days = window_offsets(t1, t2)
    col1 = col2 = 0.0
    for t in days:
        p_b = chain_probs(params.transitions, 0, int(t))[history.regime, Regime.BASE]
        decay = math.exp(-beta * t)
        col1 += p_b * (t - (1.0 - decay) / beta)
        col2 += p_b * (1.0 - decay)
    scale = beta * len(days)
    return np.array([col1 / scale, col2 / scale])


@dataclass(frozen=True)
class LambdaFit:
    """Fitted affine market price of risk with its least-squares diagnostics.

    ``residuals`` holds design @ (l1, l2) - targets per quote; ``targets``
    are the observed window risk premia the design was matched to.
    """

    lam: AffineMarketPriceOfRisk
    residuals: np.ndarray
    design: np.ndarray
    targets: np.ndarray

    @property
    def sse(self) -> float:
        return float(self.residuals @ self.residuals)


def fit_lambda(params, seasonal, history, quotes) -> LambdaFit:
    """Least-squares fit of the affine market price of risk to forward quotes.

    Builds one design row and one observed risk premium per quote and solves
    the resulting two-column linear system.  Exactly two quotes with
    independent windows interpolate the premia; more quotes are fitted in the
    least-squares sense.
    """
    quotes = list(quotes)
    if len(quotes) < 2:
        raise ValueError("need at least two quotes to identify two coefficients")
    design = np.array([lambda_design_row(params, history, q.t1, q.t2) for q in quotes])
    targets = np.array([risk_premium_period(params, seasonal, history, q) for q in quotes])
    coef, _, rank, sv = np.linalg.lstsq(design, targets, rcond=None)
    if rank < 2:
        raise FitError(
            "design matrix is rank deficient; quote windows do not separate "
            "the slope from the level",
            best_sse=float(np.sum(targets**2)),
        )
    residuals = design @ coef - targets
    lam = AffineMarketPriceOfRisk(lam1=float(coef[0]), lam2=float(coef[1]))
    return LambdaFit(lam=lam, residuals=residuals, design=design, targets=targets)
