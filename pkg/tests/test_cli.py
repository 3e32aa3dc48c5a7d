"""End-to-end tests of the command-line pipeline.

A module-scoped workspace simulates a synthetic market, writes the input
files and a configuration, and runs the seasonal, calibration and lambda
stages once.  Individual tests then check artifacts, printing, pricing,
simulation, idempotence and exit codes against that workspace.
"""

import json
import math
import shutil
import subprocess
import sys
from datetime import date, timedelta

import numpy as np
import pytest

from conftest import make_reference_params
from oracles import stationary_distribution

from mrspricing import cli, dataio
from mrspricing.model import (
    AffineMarketPriceOfRisk,
    RegimeHistory,
    expected_spot,
    simulate_path,
)
from mrspricing.riskpremium import window_offsets

START = date(2008, 1, 10)
N_DAYS = 1090
QUOTE_ROWS = [
    ("Feb-11", 54.35, "2011-02-01", "2011-02-28"),
    ("Mar-11", 51.43, "2011-03-01", "2011-03-31"),
    ("Apr-11", 50.17, "2011-04-01", "2011-04-30"),
    ("May-11", 48.16, "2011-05-01", "2011-05-31"),
    ("Jun-11", 47.27, "2011-06-01", "2011-06-30"),
    ("Jul-11", 49.00, "2011-07-01", "2011-07-31"),
]


def seasonal_shape(offsets):
    t = np.asarray(offsets, dtype=float)
    return 20.0 + 8.0 * np.sin(2.0 * np.pi * (t + 40.0) / 365.25) \
        + 1.5 * np.sin(2.0 * np.pi * t / 7.0)


def write_quotes(path, rows):
    lines = ["label,price,T1,T2,settlement"]
    for label, price, t1, t2 in rows:
        lines.append(f"{label},{price},{t1},{t2},at_maturity")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_config(path, doc):
    path.write_text(json.dumps(doc, indent=1), encoding="utf-8")
    return str(path)


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cliws")
    params = make_reference_params()
    path = simulate_path(params, seasonal_shape,
                         RegimeHistory.at_base(40.0), horizon=N_DAYS - 1,
                         seed=5)
    dates = [START + timedelta(days=i) for i in range(N_DAYS)]
    lines = ["date,price"]
    for d, p in zip(dates, path.prices):
        lines.append(f"{d.isoformat()},{float(p)!r}")
    (root / "spot.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    (root / "holidays.txt").write_text("2008-12-25\n2010-01-01\n",
                                       encoding="utf-8")
    write_quotes(root / "quotes.csv", QUOTE_ROWS)
    cfg = write_config(root / "config.json", {
        "spot_file": "spot.csv",
        "quote_file": "quotes.csv",
        "holiday_file": "holidays.txt",
        "output_dir": "out",
        "seed": 0,
        "bootstrap_reps": 60,
        "bootstrap_seed": 1,
    })
    assert cli.main(["fit-seasonal", "--config", cfg]) == 0
    assert cli.main(["calibrate", "--config", cfg]) == 0
    assert cli.main(["fit-lambda", "--config", cfg]) == 0
    return {"root": root, "cfg": cfg, "out": root / "out",
            "dates": dates, "last_date": dates[-1]}


class TestFitSeasonal:
    def test_artifacts_exist(self, workspace):
        assert (workspace["out"] / "seasonal.json").exists()
        assert (workspace["out"] / "deseasonalized.csv").exists()

    def test_idempotent_and_printed_sse_recomputes(self, workspace, capsys):
        config = dataio.load_config(workspace["cfg"])
        cmd_out_a = str(workspace["root"] / "rerun_a")
        cmd_out_b = str(workspace["root"] / "rerun_b")
        cli.cmd_fit_seasonal(config, out_dir=cmd_out_a)
        printed = capsys.readouterr().out
        cli.cmd_fit_seasonal(config, out_dir=cmd_out_b)
        for name in ("seasonal.json", "deseasonalized.csv"):
            a = (workspace["root"] / "rerun_a" / name).read_bytes()
            b = (workspace["root"] / "rerun_b" / name).read_bytes()
            assert a == b
            assert a == (workspace["out"] / name).read_bytes()
        sse_printed = float(printed.split("trend SSE:")[1].splitlines()[0])
        model, sse_stored = dataio.load_seasonal(
            workspace["out"] / "seasonal.json")
        dates, prices = dataio.read_spot_file(config.spot_file)
        resid = prices - model.trend_at(dates)
        assert sse_printed == pytest.approx(float(resid @ resid), rel=1e-9)
        assert sse_printed == sse_stored

    def test_deseasonalized_round_trip_matches_shapes(self, workspace):
        dates, x = dataio.read_series_csv(workspace["out"] / "deseasonalized.csv")
        assert len(dates) == N_DAYS
        assert dates[0] == START
        assert np.all(np.isfinite(x))


class TestCalibrate:
    def test_model_artifact_contents(self, workspace):
        params, doc = dataio.load_model(workspace["out"] / "model.json")
        assert params.base.beta > 0.0
        assert params.spike.shift < params.drop.shift
        assert doc["seed"] == 0
        v = doc["valuation"]
        assert v["date"] == workspace["last_date"].isoformat()
        assert v["regime"] in ("base", "spike", "drop")
        assert (v["lag"] == 0) == (v["regime"] == "base")
        np.testing.assert_allclose(np.sum(doc["initial_distribution"]), 1.0,
                                   atol=1e-9)

    def test_loglik_trace_nondecreasing(self, workspace):
        lines = (workspace["out"] / "loglik_trace.txt").read_text().splitlines()
        values = [float(v) for v in lines if not v.startswith("#")]
        assert len(values) >= 2
        assert all(b >= a - 1e-8 for a, b in zip(values, values[1:]))

    def test_smoothed_rows_sum_to_one(self, workspace):
        lines = (workspace["out"] / "smoothed.csv").read_text().splitlines()
        assert lines[1] == "date,p_base,p_spike,p_drop,classification"
        rows = [ln.split(",") for ln in lines[2:]]
        assert len(rows) == N_DAYS
        for row in rows[:200]:
            assert math.fsum(float(v) for v in row[1:4]) == pytest.approx(1.0, abs=1e-9)
            assert row[4] in ("base", "spike", "drop")

    def test_gof_report_layout(self, workspace):
        lines = (workspace["out"] / "gof_report.csv").read_text().splitlines()
        assert lines[1].split(",") == [
            "regime", "ewedf_stat", "ewedf_p", "ewedf_n",
            "wedf_stat", "wedf_p", "wedf_n"]
        names = [ln.split(",")[0] for ln in lines[2:]]
        assert names == ["base", "spike", "drop", "model"]

    def test_idempotent(self, workspace):
        rerun = workspace["root"] / "cal_rerun"
        rerun.mkdir(exist_ok=True)
        shutil.copy(workspace["out"] / "deseasonalized.csv",
                    rerun / "deseasonalized.csv")
        config = dataio.load_config(workspace["cfg"])
        cli.cmd_calibrate(config, out_dir=str(rerun))
        for name in ("model.json", "smoothed.csv", "loglik_trace.txt",
                     "gof_report.csv"):
            assert (rerun / name).read_bytes() == \
                (workspace["out"] / name).read_bytes()


class TestFitLambda:
    def test_lambda_artifact(self, workspace):
        l1, l2, doc = dataio.load_lambda(workspace["out"] / "lambda.json")
        assert math.isfinite(l1) and math.isfinite(l2)
        assert len(doc["residuals"]) == 6

    def test_risk_premia_table(self, workspace):
        lines = (workspace["out"] / "risk_premia.csv").read_text().splitlines()
        assert lines[1] == \
            "label,t1,t2,price,observed_premium,fitted_premium,residual"
        rows = [ln.split(",") for ln in lines[2:]]
        assert [r[0] for r in rows] == [q[0] for q in QUOTE_ROWS]
        for r in rows:
            observed, fitted, resid = (float(v) for v in r[4:7])
            assert fitted - observed == pytest.approx(resid, abs=1e-12)

    def test_two_quote_exact_interpolation(self, workspace):
        root = workspace["root"]
        out2 = root / "two_quote_out"
        if not out2.exists():
            shutil.copytree(workspace["out"], out2)
        write_quotes(root / "quotes2.csv", [QUOTE_ROWS[0], QUOTE_ROWS[3]])
        cfg2 = write_config(root / "config2.json", {
            "spot_file": "spot.csv",
            "quote_file": "quotes2.csv",
            "holiday_file": "holidays.txt",
            "output_dir": "two_quote_out",
        })
        assert cli.main(["fit-lambda", "--config", cfg2]) == 0
        _, _, doc = dataio.load_lambda(out2 / "lambda.json")
        np.testing.assert_allclose(doc["residuals"], 0.0, atol=1e-9)

    def test_synthetic_quote_recovery(self, workspace):
        root = workspace["root"]
        out3 = root / "synth_out"
        if not out3.exists():
            shutil.copytree(workspace["out"], out3)
        lam_true = AffineMarketPriceOfRisk(0.01, -1.5)
        seasonal, _ = dataio.load_seasonal(out3 / "seasonal.json")
        config = dataio.load_config(workspace["cfg"])
        params, history, val_date = cli._load_valuation(str(out3))
        g = seasonal.offset_function(val_date)
        rows = []
        for label, _, t1, t2 in QUOTE_ROWS:
            d1, d2 = date.fromisoformat(t1), date.fromisoformat(t2)
            days = window_offsets(float((d1 - val_date).days),
                                  float((d2 - val_date).days))
            price = np.mean([expected_spot(params, g, history, float(t),
                                           lam=lam_true) for t in days])
            rows.append((label, float(price), t1, t2))
        write_quotes(root / "quotes3.csv", rows)
        cfg3 = write_config(root / "config3.json", {
            "spot_file": "spot.csv",
            "quote_file": "quotes3.csv",
            "holiday_file": "holidays.txt",
            "output_dir": "synth_out",
        })
        assert cli.main(["fit-lambda", "--config", cfg3]) == 0
        l1, l2, _ = dataio.load_lambda(out3 / "lambda.json")
        assert l1 == pytest.approx(lam_true.lam1, abs=1e-7)
        assert l2 == pytest.approx(lam_true.lam2, abs=1e-6)


class TestPrice:
    def test_spot_option_prints_price(self, workspace, capsys):
        config = dataio.load_config(workspace["cfg"])
        value = cli.cmd_price(config, "spot-option", strike=55.0, maturity=30.0)
        out = capsys.readouterr().out
        assert "analytic price:" in out
        assert value >= 0.0

    def test_spot_option_grid_dimensions(self, workspace, capsys):
        config = dataio.load_config(workspace["cfg"])
        grid_out = str(workspace["root"] / "grid_out")
        shutil.copytree(workspace["out"], grid_out, dirs_exist_ok=True)
        cli.cmd_price(config, "spot-option", strike=50.0, maturity=20.0,
                      grid="40:60:5,10:40:15", out_dir=grid_out)
        capsys.readouterr()
        lines = (workspace["root"] / "grid_out" / "price_surface.csv") \
            .read_text().splitlines()
        strikes = np.arange(40.0, 62.5, 5.0)
        maturities = np.arange(10.0, 47.5, 15.0)
        assert len(lines) == 2 + strikes.size * maturities.size
        first = lines[2].split(",")
        assert float(first[0]) == 40.0 and float(first[1]) == 10.0
        by_strike = {}
        for ln in lines[2:]:
            k, t, p = (float(v) for v in ln.split(","))
            by_strike.setdefault(t, []).append((k, p))
        for t, pairs in by_strike.items():
            prices = [p for _, p in sorted(pairs)]
            assert all(b <= a + 1e-12 for a, b in zip(prices, prices[1:]))

    def test_forward_day_and_window(self, workspace, capsys):
        config = dataio.load_config(workspace["cfg"])
        day = cli.cmd_price(config, "forward", maturity=30.0)
        window = cli.cmd_price(config, "forward", window="2011-02")
        capsys.readouterr()
        assert math.isfinite(day) and math.isfinite(window)

    def test_forward_option_month_window_default_maturity(self, workspace,
                                                          capsys):
        config = dataio.load_config(workspace["cfg"])
        value = cli.cmd_price(config, "forward-option", strike=30.0,
                              window="2011-02")
        out = capsys.readouterr().out
        assert "2011-01-26" in out
        assert "4 business days" in out
        assert value > 0.0

    def test_monte_carlo_agreement_line(self, workspace, capsys):
        config = dataio.load_config(workspace["cfg"])
        cli.cmd_price(config, "spot-option", strike=45.0, maturity=15.0,
                      mc=4000)
        out = capsys.readouterr().out
        assert "mc estimate:" in out
        assert "agreement: PASS" in out

    def test_analytic_price_matches_library_call(self, workspace):
        from mrspricing.pricing import PricingContext, spot_option
        config = dataio.load_config(workspace["cfg"])
        params, history, val_date = cli._load_valuation(str(workspace["out"]))
        seasonal, _ = dataio.load_seasonal(workspace["out"] / "seasonal.json")
        l1, l2, _ = dataio.load_lambda(workspace["out"] / "lambda.json")
        ctx = PricingContext(params=params, seasonal=seasonal,
                             lam=AffineMarketPriceOfRisk(l1, l2),
                             history=history, valuation_date=val_date)
        direct = spot_option(ctx, 52.0, 25.0)
        via_cli = cli.cmd_price(config, "spot-option", strike=52.0,
                                maturity=25.0)
        assert via_cli == pytest.approx(direct, abs=0.0)


class TestSimulate:
    def test_row_count_and_determinism(self, workspace, capsys):
        config = dataio.load_config(workspace["cfg"])
        sim_a = str(workspace["root"] / "sim_a")
        sim_b = str(workspace["root"] / "sim_b")
        for d in (sim_a, sim_b):
            shutil.copytree(workspace["out"], d, dirs_exist_ok=True)
        cli.cmd_simulate(config, horizon=80, n_paths=7, out_dir=sim_a)
        cli.cmd_simulate(config, horizon=80, n_paths=7, out_dir=sim_b)
        capsys.readouterr()
        a = (workspace["root"] / "sim_a" / "paths.csv").read_bytes()
        assert a == (workspace["root"] / "sim_b" / "paths.csv").read_bytes()
        lines = a.decode().splitlines()
        assert len(lines) == 2 + 80 * 7

    def test_occupancy_matches_stationary_law(self, workspace, capsys):
        config = dataio.load_config(workspace["cfg"])
        sim = str(workspace["root"] / "sim_occ")
        shutil.copytree(workspace["out"], sim, dirs_exist_ok=True)
        cli.cmd_simulate(config, horizon=300, n_paths=40, out_dir=sim)
        capsys.readouterr()
        params, _ = dataio.load_model(workspace["out"] / "model.json")
        pi = stationary_distribution(params.transitions.matrices[0])
        counts = np.zeros(3)
        names = {"base": 0, "spike": 1, "drop": 2}
        for ln in (workspace["root"] / "sim_occ" / "paths.csv") \
                .read_text().splitlines()[2:]:
            counts[names[ln.split(",")[2]]] += 1
        np.testing.assert_allclose(counts / counts.sum(), pi, atol=0.05)

    def test_pricing_measure_runs(self, workspace, capsys):
        config = dataio.load_config(workspace["cfg"])
        sim = str(workspace["root"] / "sim_q")
        shutil.copytree(workspace["out"], sim, dirs_exist_ok=True)
        cli.cmd_simulate(config, horizon=40, n_paths=3, measure="pricing",
                         out_dir=sim)
        out = capsys.readouterr().out
        assert "pricing measure" in out


class TestProvenanceAndSeeds:
    def test_every_artifact_embeds_hash_and_seed(self, workspace):
        config = dataio.load_config(workspace["cfg"])
        for name in ("seasonal.json", "model.json", "lambda.json"):
            doc = json.loads((workspace["out"] / name).read_text())
            assert doc["config"] == config.config_hash
            assert doc["seed"] == 0
        for name in ("deseasonalized.csv", "smoothed.csv",
                     "loglik_trace.txt", "gof_report.csv",
                     "risk_premia.csv"):
            first = (workspace["out"] / name).read_text().splitlines()[0]
            assert first == f"# config={config.config_hash} seed=0"

    def test_seed_override_is_recorded(self, workspace):
        config = dataio.load_config(workspace["cfg"])
        out = str(workspace["root"] / "seed_out")
        cli.cmd_fit_seasonal(config, out_dir=out, seed=99)
        doc = json.loads((workspace["root"] / "seed_out" / "seasonal.json")
                         .read_text())
        assert doc["seed"] == 99


class TestExitCodes:
    def test_missing_config_file(self, workspace):
        assert cli.main(["calibrate", "--config",
                         str(workspace["root"] / "absent.json")]) == 2

    def test_missing_upstream_artifact(self, workspace):
        cfg = write_config(workspace["root"] / "fresh.json", {
            "spot_file": "spot.csv",
            "output_dir": "fresh_out",
        })
        assert cli.main(["calibrate", "--config", cfg]) == 2
        assert cli.main(["price", "spot-option", "--config", cfg,
                         "--strike", "50", "--maturity", "10"]) == 2

    def test_malformed_spot_file(self, workspace):
        root = workspace["root"]
        (root / "bad_spot.csv").write_text("date,price\nnope,1\n",
                                           encoding="utf-8")
        cfg = write_config(root / "bad.json", {
            "spot_file": "bad_spot.csv",
            "output_dir": "bad_out",
        })
        assert cli.main(["fit-seasonal", "--config", cfg]) == 2

    def test_argument_validation(self, workspace):
        cfg = workspace["cfg"]
        assert cli.main(["price", "spot-option", "--config", cfg]) == 2
        assert cli.main(["price", "forward", "--config", cfg,
                         "--maturity", "10", "--grid", "1:2:1,1:2:1"]) == 2
        assert cli.main(["price", "forward-option", "--config", cfg,
                         "--strike", "30", "--window", "5:35"]) == 2
        with pytest.raises(SystemExit) as err:
            cli.main(["simulate", "--config", cfg, "--horizon", "10",
                      "--paths", "2", "--measure", "sideways"])
        assert err.value.code == 2

    def test_unusable_series_is_a_fit_error(self, workspace):
        root = workspace["root"]
        out = root / "flat_out"
        out.mkdir(exist_ok=True)
        dates = [START + timedelta(days=i) for i in range(150)]
        dataio.write_series_csv(out / "deseasonalized.csv", dates,
                                np.full(150, 30.0), "h", 0, name="x")
        cfg = write_config(root / "flat.json", {
            "spot_file": "spot.csv",
            "output_dir": "flat_out",
        })
        assert cli.main(["calibrate", "--config", cfg]) == 3


def test_module_entry_point_smoke(workspace):
    proc = subprocess.run(
        [sys.executable, "-m", "mrspricing", "price", "forward-option",
         "--config", workspace["cfg"], "--strike", "30",
         "--window", "2011-02"],
        capture_output=True, text=True, timeout=300)
    assert proc.returncode == 0, proc.stderr
    assert "analytic price:" in proc.stdout
