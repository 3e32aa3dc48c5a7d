"""Input files, pipeline configuration and on-disk artifacts.

Input formats: a spot file (``date,price`` with a header line), a quote
file (``label,price,T1,T2,settlement``), and a holiday calendar (one date
per line), all ISO-8601 dates with decimal-point numbers.  Malformed rows
raise :class:`~mrspricing.errors.ParseError` carrying path and line.

Artifacts are deterministic, diff-able text: JSON with full-precision
floats for fitted objects, delimited text for series and tables.  Every
artifact embeds the configuration hash and the seed that produced it, and
writing twice with the same inputs gives byte-identical files.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from datetime import date, timedelta

import numpy as np

from .calibration import CalibrationResult
from .errors import ParseError
from .model import (
    BaseParams,
    DropParams,
    ModelParams,
    Regime,
    SpikeParams,
    TransitionSpec,
)
from .riskpremium import ForwardQuote, LambdaFit
from .seasonal import SeasonalModel

__all__ = [
    "ProjectConfig",
    "QuoteRow",
    "business_days_before",
    "load_config",
    "load_lambda",
    "load_model",
    "load_seasonal",
    "read_holiday_file",
    "read_quote_file",
    "read_series_csv",
    "read_spot_file",
    "save_lambda",
    "save_model",
    "save_seasonal",
    "write_gof_csv",
    "write_loglik_trace",
    "write_paths_csv",
    "write_price_surface_csv",
    "write_risk_premia_csv",
    "write_series_csv",
    "write_smoothed_csv",
]

_REGIME_NAMES = {Regime.BASE: "base", Regime.SPIKE: "spike", Regime.DROP: "drop"}
_REGIME_BY_NAME = {v: k for k, v in _REGIME_NAMES.items()}


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class ProjectConfig:
    """Pipeline settings loaded from a JSON file.

    Paths are resolved relative to the configuration file's directory.
    ``config_hash`` fingerprints the file content and is stamped into every
    artifact together with the effective seed.
    """

    spot_file: str
    output_dir: str
    quote_file: str | None = None
    holiday_file: str | None = None
    seed: int = 0
    transition_period: int = 1
    em_tol: float = 1e-6
    em_max_iter: int = 500
    em_min_sigma: float = 1e-8
    bootstrap_reps: int = 1000
    bootstrap_seed: int = 0
    daily_rate: float = 0.0
    config_hash: str = field(default="unset", compare=False)

    def holidays(self) -> frozenset:
        if self.holiday_file is None:
            return frozenset()
        return read_holiday_file(self.holiday_file)


def load_config(path) -> ProjectConfig:
    """Read a JSON configuration file and check the referenced files exist."""
    with open(path, "rb") as fh:
        raw = fh.read()
    try:
        doc = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ParseError(path, getattr(exc, "lineno", 0), f"not valid JSON: {exc}")
    if not isinstance(doc, dict):
        raise ParseError(path, 1, "configuration must be a JSON object")
    known = {
        "spot_file", "quote_file", "holiday_file", "output_dir", "seed",
        "transition_period", "em_tol", "em_max_iter", "em_min_sigma",
        "bootstrap_reps", "bootstrap_seed", "daily_rate",
    }
    unknown = set(doc) - known
    if unknown:
        raise ParseError(path, 1, f"unknown configuration keys: {sorted(unknown)}")
    if "spot_file" not in doc or "output_dir" not in doc:
        raise ParseError(path, 1, "spot_file and output_dir are required")
    base_dir = os.path.dirname(os.path.abspath(path))

    def resolve(p):
        return p if p is None or os.path.isabs(p) else os.path.join(base_dir, p)

    cfg = ProjectConfig(
        spot_file=resolve(doc["spot_file"]),
        output_dir=resolve(doc["output_dir"]),
        quote_file=resolve(doc.get("quote_file")),
        holiday_file=resolve(doc.get("holiday_file")),
        seed=int(doc.get("seed", 0)),
        transition_period=int(doc.get("transition_period", 1)),
        em_tol=float(doc.get("em_tol", 1e-6)),
        em_max_iter=int(doc.get("em_max_iter", 500)),
        em_min_sigma=float(doc.get("em_min_sigma", 1e-8)),
        bootstrap_reps=int(doc.get("bootstrap_reps", 1000)),
        bootstrap_seed=int(doc.get("bootstrap_seed", 0)),
        daily_rate=float(doc.get("daily_rate", 0.0)),
        config_hash=hashlib.sha256(raw).hexdigest()[:12],
    )
    for p in (cfg.spot_file, cfg.quote_file, cfg.holiday_file):
        if p is not None and not os.path.exists(p):
            raise FileNotFoundError(f"configured input file does not exist: {p}")
    return cfg


# ---------------------------------------------------------------------------
# input files


def _parse_date(text, path, line):
    try:
        return date.fromisoformat(text.strip())
    except ValueError:
        raise ParseError(path, line, f"not an ISO-8601 date: {text.strip()!r}")


def _parse_float(text, path, line, what):
    try:
        value = float(text)
    except ValueError:
        raise ParseError(path, line, f"not a number for {what}: {text.strip()!r}")
    if not math.isfinite(value):
        raise ParseError(path, line, f"{what} must be finite, got {text.strip()!r}")
    return value


def read_spot_file(path):
    """Read a ``date,price`` file with a required header.

    Returns ``(dates, prices)`` with dates as :class:`datetime.date` and
    prices as a float array.  Rows must be consecutive in time but need not
    be; only ordering and uniqueness are enforced.
    """
    dates, prices = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ParseError(path, 1, "empty file, expected a date,price header")
        if [h.strip().lower() for h in header] != ["date", "price"]:
            raise ParseError(path, 1, f"expected header date,price, got {','.join(header)!r}")
        for i, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 2:
                raise ParseError(path, i, f"expected 2 fields, got {len(row)}")
            d = _parse_date(row[0], path, i)
            if dates and d <= dates[-1]:
                raise ParseError(path, i, f"dates must be strictly increasing at {d.isoformat()}")
            dates.append(d)
            prices.append(_parse_float(row[1], path, i, "price"))
    if not dates:
        raise ParseError(path, 2, "no data rows")
    return dates, np.array(prices)


@dataclass(frozen=True)
class QuoteRow:
    """One quoted delivery-window forward, dates still in calendar form."""

    label: str
    price: float
    t1: date
    t2: date
    settlement: str

    def to_offsets(self, valuation: date) -> ForwardQuote:
        """Convert to day offsets counted from the valuation date."""
        return ForwardQuote(
            label=self.label,
            price=self.price,
            t1=float((self.t1 - valuation).days),
            t2=float((self.t2 - valuation).days),
            settlement=self.settlement,
        )


def read_quote_file(path):
    """Read a ``label,price,T1,T2,settlement`` file with a required header."""
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        expected = ["label", "price", "t1", "t2", "settlement"]
        if header is None:
            raise ParseError(path, 1, "empty file, expected a label,price,T1,T2,settlement header")
        if [h.strip().lower() for h in header] != expected:
            raise ParseError(path, 1, f"expected header label,price,T1,T2,settlement, got {','.join(header)!r}")
        for i, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 5:
                raise ParseError(path, i, f"expected 5 fields, got {len(row)}")
            settlement = row[4].strip()
            if settlement not in ("at_maturity", "instant"):
                raise ParseError(path, i, f"settlement must be at_maturity or instant, got {settlement!r}")
            t1 = _parse_date(row[2], path, i)
            t2 = _parse_date(row[3], path, i)
            if t2 < t1:
                raise ParseError(path, i, "delivery window must have T1 <= T2")
            rows.append(QuoteRow(
                label=row[0].strip(),
                price=_parse_float(row[1], path, i, "price"),
                t1=t1,
                t2=t2,
                settlement=settlement,
            ))
    if not rows:
        raise ParseError(path, 2, "no quotes")
    return rows


def read_holiday_file(path) -> frozenset:
    """Read a calendar file with one ISO-8601 date per line."""
    out = set()
    with open(path, encoding="utf-8") as fh:
        for i, line in enumerate(fh, start=1):
            text = line.strip()
            if not text:
                continue
            out.add(_parse_date(text, path, i))
    return frozenset(out)


def business_days_before(start: date, count: int, holidays=frozenset()) -> date:
    """The ``count``-th business day strictly before ``start``.

    Business days exclude Saturdays, Sundays and the supplied holidays;
    ``start`` itself is never counted.
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    d = start
    seen = 0
    while seen < count:
        d = d - timedelta(days=1)
        if d.weekday() < 5 and d not in holidays:
            seen += 1
    return d


# ---------------------------------------------------------------------------
# JSON artifacts


def _dump_json(path, doc):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def save_seasonal(path, model: SeasonalModel, sse: float, config_hash: str,
                  seed: int):
    """Persist a fitted seasonal shape with its trend SSE."""
    _dump_json(path, {
        "config": config_hash,
        "seed": int(seed),
        "trend": [float(v) for v in model.a],
        "weekly": [float(v) for v in model.weekly],
        "epoch": model.epoch.isoformat(),
        "shift": float(model.shift),
        "holidays": sorted(d.isoformat() for d in model.holidays),
        "sse": float(sse),
    })


def load_seasonal(path):
    """Rebuild the seasonal model; returns ``(model, sse)``."""
    doc = _load_json(path)
    model = SeasonalModel(
        a=np.array(doc["trend"]),
        weekly=np.array(doc["weekly"]),
        epoch=date.fromisoformat(doc["epoch"]),
        holidays=frozenset(date.fromisoformat(d) for d in doc["holidays"]),
        shift=float(doc["shift"]),
    )
    return model, float(doc["sse"])


def save_model(path, result: CalibrationResult, valuation: dict,
               config_hash: str, seed: int):
    """Persist fitted model parameters plus the valuation-date regime state.

    ``valuation`` carries date (ISO string), phase (transition slot of the
    first post-sample step), regime name, last_base_value and lag.
    """
    p = result.params
    _dump_json(path, {
        "config": config_hash,
        "seed": int(seed),
        "base": {"alpha": p.base.alpha, "beta": p.base.beta, "sigma": p.base.sigma},
        "spike": {"mu": p.spike.mu, "sigma": p.spike.sigma, "shift": p.spike.shift},
        "drop": {"mu": p.drop.mu, "sigma": p.drop.sigma, "shift": p.drop.shift},
        "transitions": [[[float(v) for v in row] for row in m]
                        for m in p.transitions.matrices],
        "initial_distribution": [float(v) for v in result.initial_distribution],
        "loglik": float(result.loglik_trace[-1]),
        "n_iterations": int(len(result.loglik_trace)),
        "valuation": valuation,
    })


def load_model(path):
    """Rebuild model parameters; returns ``(params, doc)`` with the raw dict."""
    doc = _load_json(path)
    params = ModelParams(
        base=BaseParams(**doc["base"]),
        spike=SpikeParams(**doc["spike"]),
        drop=DropParams(**doc["drop"]),
        transitions=TransitionSpec(np.array(doc["transitions"])),
    )
    return params, doc


def save_lambda(path, fit: LambdaFit, config_hash: str, seed: int):
    """Persist the fitted market price of risk with per-quote diagnostics."""
    _dump_json(path, {
        "config": config_hash,
        "seed": int(seed),
        "lam1": float(fit.lam.lam1),
        "lam2": float(fit.lam.lam2),
        "targets": [float(v) for v in fit.targets],
        "residuals": [float(v) for v in fit.residuals],
    })


def load_lambda(path):
    """Rebuild the fitted market price of risk; returns ``(lam1, lam2, doc)``."""
    doc = _load_json(path)
    return float(doc["lam1"]), float(doc["lam2"]), doc


# ---------------------------------------------------------------------------
# delimited artifacts


def _open_artifact(path, config_hash, seed):
    fh = open(path, "w", encoding="utf-8", newline="")
    fh.write(f"# config={config_hash} seed={seed}\n")
    return fh


def write_series_csv(path, dates, values, config_hash, seed, name="value"):
    """Write a dated series as ``date,<name>`` rows, full float precision."""
    with _open_artifact(path, config_hash, seed) as fh:
        fh.write(f"date,{name}\n")
        for d, v in zip(dates, values):
            fh.write(f"{d.isoformat()},{float(v)!r}\n")


def read_series_csv(path):
    """Read a dated series artifact back; returns ``(dates, values)``."""
    dates, values = [], []
    with open(path, encoding="utf-8") as fh:
        for i, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            parts = text.split(",")
            if parts[0] == "date":
                continue
            if len(parts) != 2:
                raise ParseError(path, i, f"expected 2 fields, got {len(parts)}")
            dates.append(_parse_date(parts[0], path, i))
            values.append(_parse_float(parts[1], path, i, "value"))
    if not dates:
        raise ParseError(path, 1, "no data rows")
    return dates, np.array(values)


def write_smoothed_csv(path, dates, result: CalibrationResult, config_hash,
                       seed):
    """Per-day smoothed regime probabilities and the argmax classification."""
    names = ("base", "spike", "drop")
    with _open_artifact(path, config_hash, seed) as fh:
        fh.write("date,p_base,p_spike,p_drop,classification\n")
        for d, row, label in zip(dates, result.smoothed, result.classification):
            probs = ",".join(repr(float(v)) for v in row)
            fh.write(f"{d.isoformat()},{probs},{names[int(label)]}\n")


def write_loglik_trace(path, trace, config_hash, seed):
    """One accepted log-likelihood per line, in iteration order."""
    with _open_artifact(path, config_hash, seed) as fh:
        for v in trace:
            fh.write(f"{float(v)!r}\n")


def write_gof_csv(path, report, config_hash, seed):
    """Goodness-of-fit table: one row per regime plus the pooled model.

    Columns give the KS statistic, simulated p-value and effective sample
    size for the classified (ewedf) and probability-weighted (wedf)
    constructions; inconclusive tests show empty statistic and p-value.
    """
    def cell(v):
        return "" if math.isnan(v) else repr(float(v))

    with _open_artifact(path, config_hash, seed) as fh:
        fh.write("regime,ewedf_stat,ewedf_p,ewedf_n,wedf_stat,wedf_p,wedf_n\n")
        for key, ew, wd in report.rows():
            fh.write(",".join([
                key,
                cell(ew.statistic), cell(ew.p_value), repr(float(ew.effective_obs)),
                cell(wd.statistic), cell(wd.p_value), repr(float(wd.effective_obs)),
            ]) + "\n")


def write_risk_premia_csv(path, quotes, fit: LambdaFit, config_hash, seed):
    """Per-quote observed and fitted risk premia with residuals."""
    with _open_artifact(path, config_hash, seed) as fh:
        fh.write("label,t1,t2,price,observed_premium,fitted_premium,residual\n")
        for q, target, resid in zip(quotes, fit.targets, fit.residuals):
            fitted = float(target) + float(resid)
            fh.write(f"{q.label},{q.t1.isoformat()},{q.t2.isoformat()},"
                     f"{q.price!r},{float(target)!r},{fitted!r},{float(resid)!r}\n")


def write_price_surface_csv(path, strikes, maturities, prices, config_hash,
                            seed):
    """Grid of prices over strike and maturity, one row per (K, T) pair."""
    prices = np.asarray(prices)
    with _open_artifact(path, config_hash, seed) as fh:
        fh.write("strike,maturity,price\n")
        for i, k in enumerate(strikes):
            for j, t in enumerate(maturities):
                fh.write(f"{float(k)!r},{float(t)!r},{float(prices[i, j])!r}\n")


def write_paths_csv(path, paths, config_hash, seed):
    """Simulated paths: ``path,day,regime,x,price`` rows.

    ``paths`` is a sequence of simulated paths; day 0 is the valuation-day
    state, so each path contributes its post-valuation days only.
    """
    names = ("base", "spike", "drop")
    with _open_artifact(path, config_hash, seed) as fh:
        fh.write("path,day,regime,x,price\n")
        for idx, p in enumerate(paths):
            for day in range(1, len(p.times)):
                fh.write(f"{idx},{day},{names[int(p.regimes[day])]},"
                         f"{float(p.x[day])!r},{float(p.prices[day])!r}\n")
