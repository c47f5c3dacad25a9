"""
Tests for the command-line surface
"""

import math

import pytest

from src.cli import commands
from src.cli.dependencies import parse_grid_filter
from src.cli.router import build_parser
from src.core.exceptions import ConfigError
from src.schemas.channel import KernelFamily
from src.schemas.reports import FidelityReport

# Small Monte Carlo protocol for fast command runs
FAST = ["--n-slots", "400", "--n-reps", "20", "--seed", "7", "--jobs", "2"]


def fidelity_report(key, dtv_ge, dtv_second, gap=0.0, err_pct=0.5, gap_exact=0.05):
    """Minimal report for one (T_c/D, S/sigma, kernel) key"""
    tc, s, family = key
    cells = [[gap, 0.0], [0.0, 0.0]]
    exact_cells = [[gap_exact, 0.0], [0.0, 0.0]]
    return FidelityReport(
        kernel=KernelFamily(family),
        tc_over_d=tc,
        s_norm=s,
        max_markov_gap=gap,
        gaps=cells,
        max_markov_gap_exact=gap_exact,
        gaps_exact=exact_cells,
        dtv_ge=dtv_ge,
        dtv_second=dtv_second,
        dtv_bernoulli=0.5,
        persistence_rel_err_pct=err_pct,
        persistence_exact=10.0,
        persistence_mc=10.0,
        persistence_ci95=(9.5, 10.5),
        k_max=50,
        n_runs=1000,
    )


# params
@pytest.mark.cli
def test_params_kernel(run_cli, csv_output):
    """Test closed-form parameters for SqExp with T_c = D"""
    code, out = run_cli("params", "--kernel", "sqexp", "--tc", "1", "--d", "1", "--s", "0")
    assert code == 0
    meta, rows = csv_output(out)
    assert meta["command"] == "params"
    assert len(rows) == 1
    assert rows[0]["kernel"] == "SqExp"
    expected = 0.5 - math.asin(math.exp(-1)) / math.pi
    assert float(rows[0]["p01"]) == pytest.approx(expected, abs=1e-12)
    assert float(rows[0]["p01_arcsine"]) == pytest.approx(expected, abs=1e-15)


@pytest.mark.cli
def test_params_raw_rho(run_cli, csv_output):
    """Test the raw-rho entry point"""
    code, out = run_cli("params", "--rho", "0.5", "--s", "0", "--d", "1")
    assert code == 0
    _, rows = csv_output(out)
    assert float(rows[0]["persistence"]) == pytest.approx(3.0, abs=1e-11)
    assert rows[0]["kernel"] == ""

    code, out = run_cli("params", "--rho", "0", "--s", "0")
    _, rows = csv_output(out)
    assert float(rows[0]["p01"]) == pytest.approx(0.5, abs=1e-15)
    assert float(rows[0]["p10"]) == pytest.approx(0.5, abs=1e-15)


@pytest.mark.cli
def test_params_threshold_list(run_cli, json_output):
    """Test one JSON row per threshold"""
    code, out = run_cli("params", "--rho", "0.8", "--s=-1,0,1", "--format", "json")
    assert code == 0
    document = json_output(out)
    assert [row["s"] for row in document["rows"]] == [-1.0, 0.0, 1.0]
    assert document["rows"][0]["p01"] == pytest.approx(document["rows"][2]["p10"], rel=1e-14)
    assert document["rows"][1]["p01_arcsine"] is not None
    assert document["rows"][0]["p01_arcsine"] is None


@pytest.mark.cli
@pytest.mark.parametrize(
    "argv",
    [
        ["params", "--rho", "1"],
        ["params", "--kernel", "sqexp"],
        ["params", "--rho", "0.5", "--s", "9"],
        ["params", "--kernel", "bessel", "--tc", "1"],
        ["params", "--tc", "-1"],
        ["params", "--rho", "0.5", "--log-level", "chatty"],
        ["frobnicate"],
    ],
)
def test_usage_and_domain_errors_exit_2(run_cli, argv):
    """Test exit status 2 for domain, config and usage errors"""
    code, out = run_cli(*argv)
    assert code == 2
    assert out == ""


@pytest.mark.cli
def test_tc_units(run_cli, csv_output, json_output):
    """Test that --tc is absolute while --tc-grid holds T_c/D ratios"""
    code, out = run_cli("params", "--kernel", "exp", "--tc", "4", "--d", "2")
    assert code == 0
    _, rows = csv_output(out)
    assert float(rows[0]["rho"]) == pytest.approx(math.exp(-0.5), rel=1e-15)

    code, out = run_cli(
        "scaling", "--kernel", "exp", "--tc-grid", "4", "--d", "2", "--no-mc", "--format", "json"
    )
    assert code == 0
    row = json_output(out)["rows"][0]
    assert row["t_c"] == 8.0
    assert row["rho"] == pytest.approx(math.exp(-0.25), rel=1e-15)

    _, subparsers = build_parser()
    assert "not T_c/D" in subparsers["params"].format_help()
    assert "T_c/D ratios" in subparsers["validate-table"].format_help()


# config files
@pytest.mark.cli
def test_config_file_defaults_and_flag_precedence(tmp_path, run_cli, csv_output):
    """Test that config values apply and explicit flags win"""
    config = tmp_path / "run.conf"
    config.write_text("# link\nkernel = exp\ntc = 2\ns = 0.5\n", encoding="utf-8")
    code, out = run_cli("params", "--config", str(config), "--tc", "1")
    assert code == 0
    _, rows = csv_output(out)
    assert rows[0]["kernel"] == "Exp"
    assert float(rows[0]["t_c"]) == 1.0
    assert float(rows[0]["s"]) == 0.5


@pytest.mark.cli
def test_config_file_errors(tmp_path, run_cli):
    """Test unknown keys, malformed lines and missing files"""
    unknown = tmp_path / "unknown.conf"
    unknown.write_text("rho=0.5\nwarp=9\n", encoding="utf-8")
    assert run_cli("params", "--config", str(unknown))[0] == 2

    malformed = tmp_path / "malformed.conf"
    malformed.write_text("rho 0.5\n", encoding="utf-8")
    assert run_cli("params", "--config", str(malformed))[0] == 2

    assert run_cli("params", "--config", str(tmp_path / "missing.conf"))[0] == 2


@pytest.mark.cli
def test_grid_filter_parsing():
    """Test selector normalization"""
    selectors = parse_grid_filter(["tc=2", "s=0,0.50", "kernel=SqExp"])
    assert selectors == {"tc": {"2.0"}, "s": {"0.0", "0.5"}, "kernel": {"sqexp"}}
    with pytest.raises(ConfigError):
        parse_grid_filter(["speed=2"])


# validate-table
@pytest.mark.cli
def test_validate_table_subset_matches_full_grid(run_cli, csv_output):
    """Test that a selected row equals the same row of a larger grid"""
    code, out = run_cli(
        "validate-table", "--grid", "tc=2", "s=0", "kernel=sqexp", *FAST
    )
    assert code == 0
    _, single = csv_output(out)
    assert len(single) == 1
    assert single[0]["kernel"] == "SqExp"
    assert single[0]["status"] == "ok"

    code, out = run_cli("validate-table", "--tc-grid", "2", "--s", "0", *FAST)
    assert code == 0
    _, rows = csv_output(out)
    assert [row["kernel"] for row in rows] == ["SqExp", "Exp"]
    assert rows[0] == single[0]


@pytest.mark.cli
def test_validate_table_grid_from_config(tmp_path, run_cli, csv_output):
    """Test grid selectors supplied through a config file"""
    config = tmp_path / "table.conf"
    config.write_text("grid = tc=5 kernel=exp\ns = 0\n", encoding="utf-8")
    code, out = run_cli("validate-table", "--config", str(config), *FAST)
    assert code == 0
    _, rows = csv_output(out)
    assert [(row["tc_over_d"], row["kernel"]) for row in rows] == [("5.0", "Exp")]


@pytest.mark.cli
def test_validate_table_deterministic(tmp_path, run_cli):
    """Test byte-identical output for equal seeds"""
    first = tmp_path / "first.csv"
    second = tmp_path / "second.csv"
    argv = ["validate-table", "--tc-grid", "2", "--s", "0,1", "--kernels", "exp", *FAST]
    assert run_cli(*argv, "--output", str(first))[0] == 0
    assert run_cli(*argv, "--jobs", "1", "--output", str(second))[0] == 0
    assert first.read_bytes() == second.read_bytes()


@pytest.mark.cli
def test_validate_table_empty_selection(run_cli):
    """Test that selectors matching nothing exit 2"""
    code, _ = run_cli("validate-table", "--grid", "tc=3", *FAST)
    assert code == 2


@pytest.mark.cli
def test_validate_table_failed_row(run_cli, csv_output):
    """Test that a frozen grid point is reported in its row"""
    code, out = run_cli(
        "validate-table", "--tc-grid", "1e7,2", "--s", "0", "--kernels", "sqexp", *FAST
    )
    assert code == 2
    _, rows = csv_output(out)
    assert [row["status"] for row in rows] == ["failed", "ok"]
    assert "frozen channel" in rows[0]["error"]


@pytest.mark.cli
def test_validate_table_strict_failure(monkeypatch, run_cli, json_output):
    """Test exit status 3 when a row leaves the reference tolerance"""
    monkeypatch.setitem(commands.REFERENCE_ROWS, (2.0, 0.0, "exp"), (0.9, 0.9, 0.9, 0.0))
    code, out = run_cli(
        "validate-table", "--grid", "tc=2", "s=0", "kernel=exp", "--strict",
        "--format", "json", *FAST,
    )
    assert code == 3
    document = json_output(out)
    assert document["summary"]["acceptance_failures"] >= 1
    assert "gap" in document["rows"][0]["acceptance"]


@pytest.mark.cli
def test_check_reference_second_order_slack():
    """Test that a second-order fit worse than GE by more than 0.02 is reported"""
    key = (5.0, 0.0, "exp")
    gap, dtv_ge, dtv_second, _ = commands.REFERENCE_ROWS[key]
    within = fidelity_report(key, dtv_ge, dtv_ge + 0.015, gap=gap)
    assert not any("exceeds" in p for p in commands.check_reference(key, within))
    beyond = fidelity_report(key, dtv_ge, dtv_ge + 0.025, gap=gap)
    problems = commands.check_reference(key, beyond)
    assert any("exceeds" in p for p in problems)

    passing = fidelity_report(key, dtv_ge, dtv_second, gap=gap)
    assert commands.check_reference(key, passing) == []
    slow_persistence = fidelity_report(key, dtv_ge, dtv_second, gap=gap, err_pct=3.5)
    assert commands.check_reference(key, slow_persistence) == ["err 3.50% > 3.0%"]


def trend_reports(exp_ratio, sqexp_ratio):
    """S = 0 reports with monotone exact gaps and given T_c/D = 8 improvement ratios"""
    reports = {}
    for index, tc in enumerate(commands.TREND_TCS):
        reports[(tc, 0.0, "sqexp")] = fidelity_report(
            (tc, 0.0, "sqexp"), 0.2, 0.2 / sqexp_ratio, gap_exact=0.07 - 0.01 * index
        )
        reports[(tc, 0.0, "exp")] = fidelity_report(
            (tc, 0.0, "exp"), 0.2, 0.2 / exp_ratio, gap_exact=0.12 + 0.01 * index
        )
    return reports


@pytest.mark.cli
def test_check_trends_shallow_versus_deep():
    """Test the improvement-ratio ordering of Exp over SqExp at T_c/D = 8"""
    assert commands.check_trends(trend_reports(exp_ratio=2.3, sqexp_ratio=1.2)) == []
    problems = commands.check_trends(trend_reports(exp_ratio=1.1, sqexp_ratio=1.2))
    assert len(problems) == 1
    assert "improvement" in problems[0]


@pytest.mark.cli
def test_check_trends_gap_monotonicity():
    """Test that a non-monotone exact gap sequence is reported"""
    reports = trend_reports(exp_ratio=2.3, sqexp_ratio=1.2)
    reports[(10.0, 0.0, "exp")] = fidelity_report(
        (10.0, 0.0, "exp"), 0.2, 0.1, gap_exact=0.01
    )
    problems = commands.check_trends(reports)
    assert problems == [f"exp exact max gap not monotone over T_c/D {commands.TREND_TCS}"]


@pytest.mark.cli
@pytest.mark.parametrize("selector", [["tc=15", "s=1", "kernel=exp"], ["tc=10", "s=1", "kernel=sqexp"]])
def test_validate_table_strict_persistence_rows(run_cli, json_output, selector):
    """Test the noisiest persistence rows under strict checks at protocol size"""
    code, out = run_cli("validate-table", "--grid", *selector, "--strict", "--format", "json")
    row = json_output(out)["rows"][0]
    assert row["err_pct"] <= commands.MAX_PERSISTENCE_ERROR_PCT
    assert code == 0, row["acceptance"]
    assert row["acceptance"] == "pass"


@pytest.mark.slow
def test_validate_table_reproduces_reference(run_cli, json_output):
    """Test the default 30-row table under strict reference checks"""
    code, out = run_cli("validate-table", "--strict", "--format", "json")
    document = json_output(out)
    assert len(document["rows"]) == 30
    assert code == 0, [row["acceptance"] for row in document["rows"]]


# scaling
@pytest.mark.cli
def test_scaling_sqexp_slope(run_cli, json_output):
    """Test the linear persistence slope pi / sqrt(2) for SqExp"""
    code, out = run_cli("scaling", "--kernel", "sqexp", "--no-mc", "--format", "json")
    assert code == 0
    document = json_output(out)
    assert len(document["rows"]) == 9
    assert document["summary"]["slope[s=0]"] == pytest.approx(math.pi / math.sqrt(2), rel=0.02)
    assert all(row["persistence_mc"] is None for row in document["rows"])


@pytest.mark.cli
def test_scaling_exp_exponent(run_cli, json_output):
    """Test the square-root persistence growth for Exp"""
    code, out = run_cli("scaling", "--kernel", "exp", "--no-mc", "--format", "json")
    assert code == 0
    summary = json_output(out)["summary"]
    assert summary["loglog_exponent[s=0]"] == pytest.approx(0.5, abs=0.05)


@pytest.mark.cli
def test_scaling_flags_frozen_point(run_cli, json_output):
    """Test that a frozen-channel T_c is flagged and the run continues"""
    code, out = run_cli(
        "scaling", "--kernel", "sqexp", "--tc-grid", "20,1e7", "--no-mc", "--format", "json"
    )
    assert code == 0
    rows = json_output(out)["rows"]
    assert rows[0]["flag"] is None
    assert rows[0]["persistence_exact"] is not None
    assert rows[1]["flag"] == "frozen channel; use asymptotics"
    assert rows[1]["persistence_exact"] is None
    assert rows[1]["persistence_asymptote"] > 0


@pytest.mark.cli
def test_scaling_with_monte_carlo(run_cli, json_output):
    """Test Monte Carlo columns on a short Exp grid"""
    code, out = run_cli(
        "scaling", "--kernel", "exp", "--tc-grid", "2,4", "--format", "json", *FAST
    )
    assert code == 0
    for row in json_output(out)["rows"]:
        assert row["persistence_lo"] <= row["persistence_mc"] <= row["persistence_hi"]


# diagnose
@pytest.mark.cli
def test_diagnose_empty_grid(run_cli):
    """Test that an empty T_c grid exits 2"""
    code, _ = run_cli("diagnose", "--tc-grid", "", *FAST)
    assert code == 2


@pytest.mark.cli
def test_diagnose_with_pmfs(tmp_path, run_cli, csv_output):
    """Test gap columns and the long-format PMF side output"""
    pmf_path = tmp_path / "pmf.csv"
    code, out = run_cli(
        "diagnose", "--tc-grid", "3", "--kernels", "exp", "--pmf-output", str(pmf_path), *FAST
    )
    assert code == 0
    _, rows = csv_output(out)
    assert len(rows) == 1
    row = rows[0]
    assert float(row["markov_deviation"]) == pytest.approx(0.0, abs=1e-15)
    gaps = [float(row[f"gap_exact_{i}{j}"]) for i in range(2) for j in range(2)]
    assert float(row["max_gap_exact"]) == pytest.approx(max(gaps))

    _, pmf_rows = csv_output(pmf_path.read_text(encoding="utf-8"))
    assert float(row["dtv_bernoulli"]) > float(row["dtv_ge"])
    models = {"empirical", "ge", "second", "bernoulli"}
    assert {r["model"] for r in pmf_rows} == models
    for model in models:
        entries = [r for r in pmf_rows if r["model"] == model]
        assert entries[-1]["k"] == "tail"
        assert len(entries) == int(row["k_max"]) + 1
        assert math.fsum(float(r["probability"]) for r in entries) == pytest.approx(1.0)


# simulate
@pytest.mark.cli
def test_simulate_exports(tmp_path, run_cli, csv_output):
    """Test transition estimates plus trace and path exports"""
    trace_dir = tmp_path / "traces"
    paths_file = tmp_path / "paths.csv"
    code, out = run_cli(
        "simulate", "--kernel", "exp", "--tc", "4",
        "--trace-dir", str(trace_dir), "--trace-format", "geb",
        "--paths-output", str(paths_file), "--n-paths", "2", *FAST,
    )
    assert code == 0
    meta, rows = csv_output(out)
    assert float(meta["summary.rho"]) == pytest.approx(math.exp(-0.25))
    assert "summary.lag1_autocorrelation_paths" in meta
    row = rows[0]
    assert float(row["p01_lo"]) <= float(row["p01_hat"]) <= float(row["p01_hi"])
    assert row["n_reps"] == "20"

    assert len(list(trace_dir.glob("trace_*.geb"))) == 20
    _, path_rows = csv_output(paths_file.read_text(encoding="utf-8"))
    assert len(path_rows) == 2 * 400


@pytest.mark.cli
def test_simulate_requires_tc(run_cli):
    """Test that simulate without T_c exits 2"""
    assert run_cli("simulate", *FAST)[0] == 2


# schema
@pytest.mark.cli
@pytest.mark.parametrize("model", ["table", "params", "report"])
def test_schema(run_cli, json_output, model):
    """Test JSON schema output for result documents and domain models"""
    code, out = run_cli("schema", "--model", model)
    assert code == 0
    schema = json_output(out)
    assert "properties" in schema
    if model != "report":
        assert set(schema["properties"]) >= {"meta", "rows", "summary"}
