"""Electricity spot and derivative pricing under a three-regime Markov
switching model: seasonal decomposition, EM calibration, goodness of fit,
risk-premium extraction, closed-form option and forward pricing, and a
Monte Carlo verification engine."""

from .calibration import (
    CalibrationResult,
    EmConfig,
    base_transition_sequence,
    em_calibrate,
    quartile_shifts,
    smoothed_probabilities,
)
from .errors import CalibrationError, FitError, InternalError, MrsPricingError, ParseError
from .gof import (
    GofReport,
    KsResult,
    gof_report,
    ks_ewedf,
    ks_wedf,
    regime_transforms,
    weighted_ks_statistic,
)
from .model import (
    AffineMarketPriceOfRisk,
    BaseParams,
    DropParams,
    MarketPriceOfRisk,
    ModelParams,
    Regime,
    RegimeHistory,
    SimulatedPath,
    SpikeParams,
    TabulatedMarketPriceOfRisk,
    TransitionSpec,
    anchored_base_moments,
    base_conditional_moments,
    chain_probs,
    chain_probs_cumulative,
    expected_spot,
    n_step_probs,
    restricted_path_prob,
    simulate_path,
)
from .mc import McEstimate, mc_forward_option, mc_forward_price, mc_spot_option
from .pricing import (
    DeliverySpec,
    PricingContext,
    delivery_weights,
    delivery_window_coefficients,
    forward_option,
    forward_price,
    forward_price_period,
    spot_option,
)
from .riskpremium import (
    ForwardQuote,
    LambdaFit,
    fit_lambda,
    lambda_design_row,
    risk_premium_period,
    risk_premium_point,
    window_offsets,
)
from .seasonal import (
    SeasonalModel,
    TrendFit,
    deseasonalize,
    fit_long_term,
    fit_seasonal_model,
    fit_weekly,
    reseasonalize,
    trend_value,
)

__version__ = "1.0.0"
