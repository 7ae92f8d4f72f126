import json

import pytest
from click.testing import CliRunner

from gridflex import cli
from gridflex.harness import bundled_scenarios


@pytest.fixture()
def runner():
    return CliRunner()


def small_config_file(tmp_path, **kw):
    cfg = bundled_scenarios()["winter_2b"].to_dict()
    cfg.update({"days": 1, "master_seed": 3})
    cfg.update(kw)
    path = tmp_path / "scenario.json"
    path.write_text(json.dumps(cfg))
    return str(path)


def test_schedule_command(runner, tmp_path):
    cfg = small_config_file(tmp_path)
    out = tmp_path / "out"
    result = runner.invoke(cli.main, ["schedule", "--config", cfg,
                                      "--out", str(out)])
    assert result.exit_code == 0, result.output
    assert (out / "schedule.csv").exists()
    assert (out / "schedule_summary.csv").exists()
    assert "objective" in result.output


def test_simulate_command_exit_zero_and_outputs(runner, tmp_path):
    cfg = small_config_file(tmp_path)
    out = tmp_path / "sim"
    result = runner.invoke(cli.main, ["simulate", "--config", cfg,
                                      "--out", str(out)])
    assert result.exit_code == 0, result.output
    for name in ("summary.csv", "allocation.csv", "log.csv", "report.txt"):
        assert (out / name).exists()
    assert "violations 0" in result.output


def test_simulate_determinism_byte_identical(runner, tmp_path):
    cfg = small_config_file(tmp_path)
    out1 = tmp_path / "a"
    out2 = tmp_path / "b"
    r1 = runner.invoke(cli.main, ["simulate", "--config", cfg,
                                  "--out", str(out1)])
    r2 = runner.invoke(cli.main, ["simulate", "--config", cfg,
                                  "--out", str(out2)])
    assert r1.exit_code == 0 and r2.exit_code == 0
    for name in ("summary.csv", "allocation.csv", "log.csv", "report.txt"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()


def test_sweep_bid_command(runner, tmp_path):
    out = tmp_path / "bid"
    result = runner.invoke(cli.main, [
        "sweep-bid", "--scenario", "threshold", "--out", str(out),
        "--ratios", "0.99,1.01"])
    assert result.exit_code == 0, result.output
    text = (out / "bid_curve.csv").read_text()
    assert text.splitlines()[0] == "ratio,pc_kw,pec_kw"


def test_sweep_te_command(runner, tmp_path):
    cfg = small_config_file(tmp_path, buildings=[["B3", 1]])
    out = tmp_path / "te"
    result = runner.invoke(cli.main, ["sweep-te", "--config", cfg,
                                      "--out", str(out),
                                      "--t-hours", "2", "--eps", "0.2,0.4"])
    assert result.exit_code == 0, result.output
    assert (out / "te_grid.csv").exists()


def test_analyze_signal_command(runner, tmp_path):
    out = tmp_path / "sig"
    result = runner.invoke(cli.main, ["analyze-signal", "--seed", "5",
                                      "--days", "1", "--t-hours", "1,2",
                                      "--out", str(out)])
    assert result.exit_code == 0, result.output
    assert (out / "bias_table.csv").exists()


def test_filter_signal_command(runner, tmp_path):
    out = tmp_path / "filt"
    result = runner.invoke(cli.main, ["filter-signal", "--seed", "5",
                                      "--days", "1", "--out", str(out)])
    assert result.exit_code == 0, result.output
    spec = json.loads((out / "filter_spec.json").read_text())
    assert spec["stable"] is True
    assert (out / "hf.csv").exists()


def test_unknown_scenario_fails(runner, tmp_path):
    result = runner.invoke(cli.main, ["schedule", "--scenario", "nope",
                                      "--out", str(tmp_path)])
    assert result.exit_code != 0


def test_config_and_scenario_conflict(runner, tmp_path):
    cfg = small_config_file(tmp_path)
    result = runner.invoke(cli.main, ["schedule", "--config", cfg,
                                      "--scenario", "winter",
                                      "--out", str(tmp_path)])
    assert result.exit_code != 0
