"""Rolling construction exercise, pooled statistics, presentation tables."""

import numpy as np
import pytest

from sparsefolio import (
    BacktestConfig,
    InputError,
    MonthlySeries,
    Policy,
    ReturnPanel,
    ZeroVolatility,
    add_months,
    compute_stats,
    default_evaluation_periods,
    run_exercise,
    run_k_sweep,
)
from sparsefolio.backtest import (
    active_counts_csv,
    report_to_dict,
    sharpe_vs_k_csv,
    stats_table_csv,
)
from sparsefolio import jsonio


def month_grid(start, t):
    return tuple(add_months(start, k) for k in range(t))


def exercise_panel(n=4, seed=0, start=(1976, 7), months=48):
    rng = np.random.default_rng(seed)
    r = 0.05 * rng.standard_normal((months, n)) + 0.01
    return ReturnPanel(
        returns=r,
        dates=month_grid(start, months),
        asset_names=tuple(f"A{k}" for k in range(n)),
    )


def two_year_config(policy=None):
    return BacktestConfig(
        first_construction=(1978, 6),
        last_construction=(1979, 6),
        training_months=24,
        policy=policy or Policy.no_short(),
    )


# --- config ---

def test_config_validation():
    with pytest.raises(InputError):
        BacktestConfig(first_construction=(1976, 7))
    with pytest.raises(InputError):
        BacktestConfig(first_construction=(2000, 6),
                       last_construction=(1999, 6))
    with pytest.raises(InputError):
        BacktestConfig(training_months=1)
    with pytest.raises(InputError):
        BacktestConfig(evaluation_periods=(((2000, 5), (2000, 1)),))


def test_default_evaluation_periods_layout():
    config = BacktestConfig()  # 1976..2005, 360 holding months
    periods = default_evaluation_periods(config)
    assert periods[0] == ((1976, 7), (2006, 6))
    assert len(periods) == 1 + 6  # full span plus six complete 60-month runs
    assert periods[1] == ((1976, 7), (1981, 6))
    assert periods[-1] == ((2001, 7), (2006, 6))


# --- compute_stats ---

def test_stats_constant_series_zero_volatility():
    series = MonthlySeries(months=month_grid((2000, 1), 6), values=np.full(6, 0.03))
    with pytest.raises(ZeroVolatility):
        compute_stats(series, ((2000, 1), (2000, 6)))


def test_stats_alternating_series():
    vals = np.array([0.05, -0.05] * 6)
    series = MonthlySeries(months=month_grid((2000, 1), 12), values=vals)
    st = compute_stats(series, ((2000, 1), (2000, 12)))
    assert st.mean_monthly == 0.0
    assert st.sharpe == 0.0
    assert abs(st.std_monthly - 0.05) <= 1e-15


def test_stats_match_two_pass_oracle():
    rng = np.random.default_rng(44)
    vals = rng.standard_normal(360) * 0.04 + 0.01
    series = MonthlySeries(months=month_grid((1976, 7), 360), values=vals)
    st = compute_stats(series, ((1976, 7), (2006, 6)))
    mean = sum(float(v) for v in vals) / 360.0
    var = sum((float(v) - mean) ** 2 for v in vals) / 360.0
    assert abs(st.mean_monthly - mean) <= 1e-12
    assert abs(st.std_monthly - np.sqrt(var)) <= 1e-12
    assert abs(st.sharpe * st.std_monthly - st.mean_monthly) <= 1e-12
    assert st.n_months == 360


def test_stats_period_masking_and_short_period():
    vals = np.arange(10, dtype=float) / 100.0
    series = MonthlySeries(months=month_grid((2000, 1), 10), values=vals)
    st = compute_stats(series, ((2000, 3), (2000, 6)))
    assert st.n_months == 4
    assert np.isclose(st.mean_monthly, np.mean(vals[2:6]))
    with pytest.raises(InputError):
        compute_stats(series, ((2001, 1), (2001, 2)))  # nothing in range


# --- run_exercise ---

def test_exercise_shape_and_benchmark():
    panel = exercise_panel()
    report = run_exercise(panel, two_year_config())
    assert report.years == (1978, 1979)
    assert len(report.series.months) == 24
    assert report.series.months[0] == (1978, 7)
    assert report.series.months[-1] == (1980, 6)
    # benchmark is the exact row mean of each holding month
    for month, value in zip(report.benchmark_series.months,
                            report.benchmark_series.values):
        row = panel.returns[panel.dates.index(month)]
        assert value == row.mean()
    # default period pool: 24 months only supports the full span
    assert report.evaluation_periods[0] == ((1978, 7), (1980, 6))


def test_exercise_target_is_training_grand_mean():
    panel = exercise_panel(seed=1)
    report = run_exercise(panel, two_year_config())
    for year, rho in zip(report.years, report.target_returns):
        lo = panel.dates.index(add_months((year, 6), -23))
        train = panel.returns[lo:lo + 24]
        assert rho == float(train.mean(axis=1).mean())


def test_exercise_selections_satisfy_constraints():
    panel = exercise_panel(seed=2)
    report = run_exercise(panel, two_year_config())
    for year, rho, sel in zip(report.years, report.target_returns,
                              report.selections):
        assert sel is not None
        assert np.all(sel.weights >= 0.0)
        assert abs(sel.weights.sum() - 1.0) <= 1e-10
        lo = panel.dates.index(add_months((year, 6), -23))
        mu = panel.returns[lo:lo + 24].mean(axis=0)
        assert abs(mu @ sel.weights - rho) <= 1e-10


def test_exercise_strategy_series_values():
    panel = exercise_panel(seed=3)
    report = run_exercise(panel, two_year_config())
    for month, value in zip(report.series.months, report.series.values):
        year = month[0] if month[1] >= 7 else month[0] - 1
        sel = report.selections[report.years.index(year)]
        row = panel.returns[panel.dates.index(month)]
        # matrix-vector and row-dot kernels can disagree in the last bit
        assert abs(value - float(row @ sel.weights)) <= 1e-16


def test_exercise_deterministic():
    panel = exercise_panel(seed=4)
    a = run_exercise(panel, two_year_config())
    b = run_exercise(panel, two_year_config())
    assert jsonio.dumps(report_to_dict(a)) == jsonio.dumps(report_to_dict(b))


def test_exercise_breakout_consistency():
    panel = exercise_panel(seed=5)
    periods = (((1978, 7), (1980, 6)),
               ((1978, 7), (1979, 6)),
               ((1979, 7), (1980, 6)))
    config = BacktestConfig(first_construction=(1978, 6),
                            last_construction=(1979, 6),
                            training_months=24,
                            evaluation_periods=periods)
    report = run_exercise(panel, config)
    full, first, second = report.stats
    lumped = (first.mean_monthly * first.n_months
              + second.mean_monthly * second.n_months)
    assert abs(lumped / full.n_months - full.mean_monthly) <= 1e-12


def test_exercise_single_asset_panel():
    rng = np.random.default_rng(6)
    col = 0.05 * rng.standard_normal(48) + 0.01
    panel = ReturnPanel(returns=col[:, None],
                        dates=month_grid((1976, 7), 48),
                        asset_names=("only",))
    report = run_exercise(panel, two_year_config())
    for sel in report.selections:
        np.testing.assert_array_equal(sel.weights, [1.0])
    # the strategy just holds the asset
    for month, value in zip(report.series.months, report.series.values):
        assert value == col[panel.dates.index(month)]


def test_exercise_reports_failed_years():
    # a 1-asset-exact portfolio can never satisfy both constraint rows, so
    # every construction year fails; the report must still come back with
    # the failures listed and the benchmark intact
    panel = exercise_panel(seed=7, n=3)
    report = run_exercise(panel, two_year_config(policy=Policy.exact_k(1)))
    assert len(report.failures) == 2
    assert all(name == "CardinalityUnreachable" for _, name, _ in report.failures)
    assert report.selections == (None, None)
    assert len(report.series.months) == 0
    assert len(report.benchmark_series.months) == 24
    assert report.stats[0] is None
    assert report.benchmark_stats[0] is not None
    # presentation survives the holes
    table = stats_table_csv(report)
    assert table.splitlines()[1].split(",")[1] == ""
    counts = active_counts_csv(report).splitlines()
    assert counts[1] == "1978,"
    payload = report_to_dict(report)
    assert payload["stats"][0] is None
    jsonio.dumps(payload)  # must serialize


# --- presentation ---

def test_stats_table_formats():
    panel = exercise_panel(seed=8)
    report = run_exercise(panel, two_year_config())
    plain = stats_table_csv(report).splitlines()
    assert plain[0] == ("period,no-short_m,no-short_sigma,no-short_sharpe,"
                        "equal_weight_m,equal_weight_sigma,equal_weight_sharpe")
    row = plain[1].split(",")
    assert row[0] == "1978-07..1980-06"
    st = report.stats[0]
    assert row[1] == f"{100.0 * st.mean_monthly:.1f}"
    paper = stats_table_csv(report, paper_mode=True).splitlines()
    cells = paper[1].split(",")
    assert cells[1] == str(int(round(100.0 * st.mean_monthly)))
    assert "." not in cells[1]


def test_active_counts_csv_layout():
    panel = exercise_panel(seed=9)
    report = run_exercise(panel, two_year_config())
    lines = active_counts_csv(report).splitlines()
    assert lines[0] == "year,active_count"
    assert lines[1].startswith("1978,")
    assert int(lines[1].split(",")[1]) == report.selections[0].active_count


def test_report_dict_round_trips_through_json():
    panel = exercise_panel(seed=10)
    report = run_exercise(panel, two_year_config())
    text = jsonio.dumps(report_to_dict(report))
    import json

    payload = json.loads(text)
    assert payload["policy"] == "no-short"
    assert payload["years"] == [1978, 1979]
    assert len(payload["series"]["values"]) == 24
    assert payload["series"]["months"][0] == "1978-07"
    assert payload["selections"][0]["failed"] is False


# --- k sweep ---

def test_k_sweep_rows_and_blanks():
    panel = exercise_panel(seed=11, n=4)
    config = two_year_config()
    sweep = run_k_sweep(panel, config, 1, 4)
    assert [k for k, _ in sweep] == [1, 2, 3, 4]
    by_k = dict(sweep)
    assert by_k[1] is None  # a single asset cannot meet both rows
    attained = [k for k, st in sweep if st is not None]
    assert attained, "expected at least one attainable cardinality"
    text = sharpe_vs_k_csv(sweep).splitlines()
    assert text[0] == "k,sharpe"
    assert text[1] == "1,"
    k = attained[0]
    assert text[k].startswith(f"{k},")
    assert text[k] != f"{k},"


def test_k_sweep_matches_exercise_for_attained_k():
    panel = exercise_panel(seed=12, n=4)
    config = two_year_config()
    sweep = dict(run_k_sweep(panel, config, 1, 4))
    for k, st in sweep.items():
        if st is None:
            continue
        report = run_exercise(panel, two_year_config(policy=Policy.exact_k(k)))
        full = report.stats[0]
        assert abs(full.sharpe - st.sharpe) <= 1e-15
