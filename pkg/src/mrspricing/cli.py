"""Command-line pipeline: seasonal fit, calibration, market price of risk,
pricing and simulation.

Each command reads a JSON configuration file, consumes the artifacts of the
previous stages from the output directory, and writes its own artifacts
there.  Commands are deterministic: identical inputs and seed give
byte-identical outputs.  Exit codes: 0 success, 2 malformed input or
arguments, 3 numerical or fitting failure.
"""

from __future__ import annotations

import argparse
import calendar as _calendar
import math
import os
import re
import sys
from datetime import date

import numpy as np

from . import dataio
from .calibration import EmConfig, em_calibrate, quartile_shifts
from .errors import FitError, InternalError, MrsPricingError, ParseError
from .gof import gof_report
from .mc import mc_forward_option, mc_forward_price, mc_spot_option
from .model import (
    AffineMarketPriceOfRisk,
    ModelParams,
    Regime,
    RegimeHistory,
    TransitionSpec,
    simulate_path,
)
from .pricing import (
    DeliverySpec,
    PricingContext,
    forward_option,
    forward_price,
    forward_price_period,
    spot_option,
)
from .riskpremium import fit_lambda
from .seasonal import fit_seasonal_model

__all__ = [
    "cmd_calibrate",
    "cmd_fit_lambda",
    "cmd_fit_seasonal",
    "cmd_price",
    "cmd_simulate",
    "main",
]

_REGIME_NAMES = ("base", "spike", "drop")
_DEFAULT_MATURITY_RULE = 4  # business days before delivery start


def _ensure_out(config, out_dir):
    out = out_dir if out_dir is not None else config.output_dir
    os.makedirs(out, exist_ok=True)
    return out


def _artifact(out, name):
    path = os.path.join(out, name)
    if not os.path.exists(path):
        raise FileNotFoundError(
            f"missing artifact {path}; run the earlier pipeline stage first")
    return path


def cmd_fit_seasonal(config, out_dir=None, seed=None):
    """Fit the seasonal shape and write it plus the deseasonalized series."""
    out = _ensure_out(config, out_dir)
    seed = config.seed if seed is None else seed
    dates, prices = dataio.read_spot_file(config.spot_file)
    holidays = config.holidays()
    model, x, fit = fit_seasonal_model(dates, prices, holidays)
    dataio.save_seasonal(os.path.join(out, "seasonal.json"), model, fit.sse,
                         config.config_hash, seed)
    dataio.write_series_csv(os.path.join(out, "deseasonalized.csv"), dates, x,
                            config.config_hash, seed, name="x")
    print(f"trend SSE: {fit.sse!r}")
    print(f"level shift: {model.shift!r}")
    return {"seasonal": os.path.join(out, "seasonal.json"),
            "deseasonalized": os.path.join(out, "deseasonalized.csv")}


def _valuation_state(dates, x, result):
    """Regime state at the last observed day, for pricing forward from it.

    When the final day is off-base the anchored value is the latent base
    mean one day after the last classified base day, which is the quantity
    the pricing formulas condition on.
    """
    labels = result.classification
    n = labels.size
    base_days = np.flatnonzero(labels == 0)
    if base_days.size and base_days[-1] == n - 1:
        regime, value, lag = "base", float(x[-1]), 0
    elif base_days.size:
        j = int(base_days[-1])
        lag = int(n - 1 - j)
        b = result.params.base
        phi = math.exp(-b.beta)
        value = b.mean_level + phi * (float(x[j]) - b.mean_level)
        regime = _REGIME_NAMES[int(labels[-1])]
    else:
        regime, value, lag = _REGIME_NAMES[int(labels[-1])], \
            result.params.base.mean_level, int(n)
    period = result.params.transitions.period
    return {
        "date": dates[-1].isoformat(),
        "phase": int((n - 1) % period),
        "regime": regime,
        "last_base_value": value,
        "lag": lag,
    }


def cmd_calibrate(config, out_dir=None, seed=None):
    """Calibrate the switching model on the deseasonalized series.

    Writes the fitted parameters with the valuation-day regime state, the
    smoothed probabilities with classification, the log-likelihood trace and
    the goodness-of-fit table.
    """
    out = _ensure_out(config, out_dir)
    seed = config.seed if seed is None else seed
    dates, x = dataio.read_series_csv(_artifact(out, "deseasonalized.csv"))
    shifts = quartile_shifts(x)
    result = em_calibrate(
        x, shifts, transition_period=config.transition_period,
        config=EmConfig(tol=config.em_tol, max_iter=config.em_max_iter,
                        min_sigma=config.em_min_sigma))
    report = gof_report(x, result.smoothed, result.params,
                        reps=config.bootstrap_reps, seed=config.bootstrap_seed)
    dataio.save_model(os.path.join(out, "model.json"), result,
                      _valuation_state(dates, x, result),
                      config.config_hash, seed)
    dataio.write_smoothed_csv(os.path.join(out, "smoothed.csv"), dates, result,
                              config.config_hash, seed)
    dataio.write_loglik_trace(os.path.join(out, "loglik_trace.txt"),
                              result.loglik_trace, config.config_hash, seed)
    dataio.write_gof_csv(os.path.join(out, "gof_report.csv"), report,
                         config.config_hash, seed)
    print(f"log-likelihood: {float(result.loglik_trace[-1])!r} "
          f"after {len(result.loglik_trace)} iterations")
    print(f"regime shifts: spike above {shifts[0]!r}, drop below {shifts[1]!r}")
    return result


def _load_valuation(out):
    """Model, pricing-phase parameters, regime state and valuation date."""
    params, doc = dataio.load_model(_artifact(out, "model.json"))
    v = doc["valuation"]
    pricing_params = ModelParams(
        base=params.base, spike=params.spike, drop=params.drop,
        transitions=params.transitions.rotated(int(v["phase"])))
    history = RegimeHistory(
        regime=Regime(_REGIME_NAMES.index(v["regime"])),
        last_base_value=float(v["last_base_value"]),
        lag=int(v["lag"]))
    return pricing_params, history, date.fromisoformat(v["date"])


def cmd_fit_lambda(config, out_dir=None, seed=None):
    """Fit the market price of risk to the quoted forwards.

    Writes the two coefficients and a per-quote table of observed premium,
    fitted premium and residual.
    """
    out = _ensure_out(config, out_dir)
    seed = config.seed if seed is None else seed
    if config.quote_file is None:
        raise ValueError("no quote file configured; set quote_file to fit lambda")
    params, history, val_date = _load_valuation(out)
    seasonal, _ = dataio.load_seasonal(_artifact(out, "seasonal.json"))
    g = seasonal.offset_function(val_date)
    rows = dataio.read_quote_file(config.quote_file)
    quotes = [q.to_offsets(val_date) for q in rows]
    for q in quotes:
        if q.t1 <= 0:
            raise ValueError(
                f"quote {q.label} starts delivery on or before the valuation date")
    fit = fit_lambda(params, g, history, quotes)
    dataio.save_lambda(os.path.join(out, "lambda.json"), fit,
                       config.config_hash, seed)
    dataio.write_risk_premia_csv(os.path.join(out, "risk_premia.csv"), rows,
                                 fit, config.config_hash, seed)
    print(f"lambda1: {float(fit.lam.lam1)!r}")
    print(f"lambda2: {float(fit.lam.lam2)!r}")
    print(f"max residual: {float(np.max(np.abs(fit.residuals)))!r}")
    return fit


_MONTH_RE = re.compile(r"^(\d{4})-(\d{2})$")


def _parse_window(text, val_date):
    """Delivery window as day offsets.

    Accepts ``YYYY-MM`` (the calendar month), ``date:date`` (ISO-8601) or
    ``a:b`` (numeric day offsets).  Returns ``(t1, t2, t1_date)`` with
    ``t1_date`` None for numeric windows.
    """
    m = _MONTH_RE.match(text.strip())
    if m:
        y, mo = int(m.group(1)), int(m.group(2))
        if not 1 <= mo <= 12:
            raise ValueError(f"not a calendar month: {text!r}")
        d1 = date(y, mo, 1)
        d2 = date(y, mo, _calendar.monthrange(y, mo)[1])
        return float((d1 - val_date).days), float((d2 - val_date).days), d1
    parts = text.split(":")
    if len(parts) != 2:
        raise ValueError(f"window must be YYYY-MM, date:date or a:b, got {text!r}")
    try:
        d1 = date.fromisoformat(parts[0].strip())
        d2 = date.fromisoformat(parts[1].strip())
        return float((d1 - val_date).days), float((d2 - val_date).days), d1
    except ValueError:
        pass
    try:
        t1, t2 = float(parts[0]), float(parts[1])
    except ValueError:
        raise ValueError(f"window must be YYYY-MM, date:date or a:b, got {text!r}")
    return t1, t2, None


def _parse_grid(text):
    """Parse ``K0:K1:dK,T0:T1:dT`` into strike and maturity arrays."""
    parts = text.split(",")
    if len(parts) != 2:
        raise ValueError(f"grid must be K0:K1:dK,T0:T1:dT, got {text!r}")
    axes = []
    for part in parts:
        nums = part.split(":")
        if len(nums) != 3:
            raise ValueError(f"grid axis must be a:b:step, got {part!r}")
        try:
            a, b, step = (float(v) for v in nums)
        except ValueError:
            raise ValueError(f"grid axis must be numeric, got {part!r}")
        if step <= 0 or b < a:
            raise ValueError(f"grid axis needs a <= b and step > 0, got {part!r}")
        axes.append(np.arange(a, b + step * 0.5, step))
    return axes[0], axes[1]


def cmd_price(config, subcommand, strike=None, maturity=None, window=None,
              mc=None, grid=None, out_dir=None, seed=None):
    """Price a spot option, a delivery-window forward, or a forward option.

    Prints the analytic value; with ``mc`` also prints a Monte Carlo
    estimate with its standard error and a PASS/FAIL agreement check at
    three standard errors; with ``grid`` writes a (strike, maturity) price
    surface file.
    """
    out = _ensure_out(config, out_dir)
    seed = config.seed if seed is None else seed
    params, history, val_date = _load_valuation(out)
    seasonal, _ = dataio.load_seasonal(_artifact(out, "seasonal.json"))
    lam1, lam2, _ = dataio.load_lambda(_artifact(out, "lambda.json"))
    ctx = PricingContext(params=params, seasonal=seasonal,
                         lam=AffineMarketPriceOfRisk(lam1, lam2),
                         history=history, r=config.daily_rate,
                         valuation_date=val_date)
    spec = None
    t1_date = None
    if window is not None:
        t1, t2, t1_date = _parse_window(window, val_date)
        spec = DeliverySpec(t1, t2)

    if subcommand == "spot-option":
        if strike is None or maturity is None:
            raise ValueError("spot-option needs --strike and --maturity")
        price = spot_option(ctx, strike, maturity)
        mc_fn = lambda n: mc_spot_option(ctx, strike, maturity, n, seed)
        grid_fn = lambda k, t: spot_option(ctx, k, t)
    elif subcommand == "forward":
        if grid is not None:
            raise ValueError("--grid applies to option products")
        if spec is not None:
            price = forward_price_period(ctx, 0.0, spec)
            mc_fn = lambda n: mc_forward_price(ctx, 0.0, spec, n, seed)
        elif maturity is not None:
            price = forward_price(ctx, 0.0, maturity)
            mc_fn = lambda n: mc_forward_price(ctx, 0.0, maturity, n, seed)
        else:
            raise ValueError("forward needs --maturity or --window")
        grid_fn = None
    elif subcommand == "forward-option":
        if strike is None or spec is None:
            raise ValueError("forward-option needs --strike and --window")
        if maturity is None:
            if t1_date is None:
                raise ValueError(
                    "a numeric window needs an explicit --maturity")
            t_date = dataio.business_days_before(
                t1_date, _DEFAULT_MATURITY_RULE, config.holidays())
            maturity = float((t_date - val_date).days)
            print(f"option maturity: {t_date.isoformat()} "
                  f"(day {maturity:g}, {_DEFAULT_MATURITY_RULE} business days "
                  f"before delivery)")
        if maturity < 0:
            raise ValueError("option maturity falls before the valuation date")
        price = forward_option(ctx, strike, maturity, spec)
        mc_fn = lambda n: mc_forward_option(ctx, strike, maturity, spec, n, seed)
        grid_fn = lambda k, t: forward_option(ctx, k, t, spec)
    else:
        raise ValueError(f"unknown price subcommand {subcommand!r}")

    print(f"analytic price: {float(price)!r}")
    if mc is not None:
        est = mc_fn(int(mc))
        gap = abs(est.value - price)
        verdict = "PASS" if gap <= 3.0 * est.stderr else "FAIL"
        print(f"mc estimate: {est.value!r} stderr: {est.stderr!r} "
              f"({est.n_paths} paths) agreement: {verdict}")
    if grid is not None:
        if grid_fn is None:
            raise ValueError("--grid applies to option products")
        strikes, maturities = _parse_grid(grid)
        surface = np.array([[grid_fn(float(k), float(t)) for t in maturities]
                            for k in strikes])
        path = os.path.join(out, "price_surface.csv")
        dataio.write_price_surface_csv(path, strikes, maturities, surface,
                                       config.config_hash, seed)
        print(f"price surface: {path} ({strikes.size} strikes x "
              f"{maturities.size} maturities)")
    return float(price)


def cmd_simulate(config, horizon, n_paths, measure="actual", out_dir=None,
                 seed=None):
    """Simulate price paths from the fitted model and write them to a file.

    ``measure`` selects the real-world dynamics (``actual``) or the
    risk-adjusted dynamics implied by the fitted market price of risk
    (``pricing``).  Path ``i`` uses seed ``seed + i``.
    """
    out = _ensure_out(config, out_dir)
    seed = config.seed if seed is None else seed
    if horizon < 1 or n_paths < 1:
        raise ValueError("horizon and paths must be positive")
    if measure not in ("actual", "pricing"):
        raise ValueError(f"measure must be actual or pricing, got {measure!r}")
    params, history, val_date = _load_valuation(out)
    seasonal, _ = dataio.load_seasonal(_artifact(out, "seasonal.json"))
    lam = None
    if measure == "pricing":
        lam1, lam2, _ = dataio.load_lambda(_artifact(out, "lambda.json"))
        lam = AffineMarketPriceOfRisk(lam1, lam2)
    paths = [simulate_path(params, seasonal, history, int(horizon),
                           lam=lam, seed=seed + i, valuation_date=val_date)
             for i in range(int(n_paths))]
    path = os.path.join(out, "paths.csv")
    dataio.write_paths_csv(path, paths, config.config_hash, seed)
    counts = np.zeros(3)
    for p in paths:
        counts += np.bincount(p.regimes[1:], minlength=3)
    occupancy = counts / counts.sum()
    print(f"paths: {path} ({int(n_paths)} x {int(horizon)} days, "
          f"{measure} measure)")
    print("regime occupancy: base {:.4f} spike {:.4f} drop {:.4f}".format(
        *occupancy))
    return path


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="mrspricing",
        description="Regime-switching electricity price model: fit, test, price.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="JSON configuration file")
        p.add_argument("--seed", type=int, default=None,
                       help="override the configured seed")
        p.add_argument("--out", default=None,
                       help="override the configured output directory")

    common(sub.add_parser("fit-seasonal",
                          help="fit the seasonal shape, write residual series"))
    common(sub.add_parser("calibrate",
                          help="run EM on the deseasonalized series"))
    common(sub.add_parser("fit-lambda",
                          help="fit the market price of risk to forward quotes"))

    p = sub.add_parser("price", help="price an instrument from the artifacts")
    p.add_argument("product", choices=["spot-option", "forward", "forward-option"])
    common(p)
    p.add_argument("--strike", type=float, default=None)
    p.add_argument("--maturity", type=float, default=None,
                   help="day offset from the valuation date")
    p.add_argument("--window", default=None,
                   help="delivery window: YYYY-MM, date:date, or a:b day offsets")
    p.add_argument("--mc", type=int, default=None,
                   help="cross-check with this many Monte Carlo paths")
    p.add_argument("--grid", default=None,
                   help="emit a price surface over K0:K1:dK,T0:T1:dT")

    p = sub.add_parser("simulate", help="simulate paths from the fitted model")
    common(p)
    p.add_argument("--horizon", type=int, required=True)
    p.add_argument("--paths", type=int, required=True)
    p.add_argument("--measure", choices=["actual", "pricing"], default="actual")
    return parser


def _dispatch(args):
    config = dataio.load_config(args.config)
    if args.command == "fit-seasonal":
        cmd_fit_seasonal(config, out_dir=args.out, seed=args.seed)
    elif args.command == "calibrate":
        cmd_calibrate(config, out_dir=args.out, seed=args.seed)
    elif args.command == "fit-lambda":
        cmd_fit_lambda(config, out_dir=args.out, seed=args.seed)
    elif args.command == "price":
        cmd_price(config, args.product, strike=args.strike,
                  maturity=args.maturity, window=args.window, mc=args.mc,
                  grid=args.grid, out_dir=args.out, seed=args.seed)
    elif args.command == "simulate":
        cmd_simulate(config, args.horizon, args.paths, measure=args.measure,
                     out_dir=args.out, seed=args.seed)
    return 0


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except (ParseError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (FitError, InternalError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except MrsPricingError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
