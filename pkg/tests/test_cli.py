import json

import pytest
from click.testing import CliRunner

from app.core.constants import SUBCOMMANDS
from app.main import cli
from app.services.selftest import SelfTestCheck, SelfTestReport


@pytest.fixture
def runner():
    return CliRunner()


def test_every_subcommand_is_registered():
    assert set(SUBCOMMANDS) <= set(cli.commands)
    assert "selftest" in cli.commands


def test_version(runner):
    result = runner.invoke(cli, ["--version"])
    assert result.exit_code == 0
    assert "quasilab" in result.output


def test_cf_writes_fibonacci(runner, run_dir):
    result = runner.invoke(cli, ["cf", "--set", "depth=10", "--out", str(run_dir)])
    assert result.exit_code == 0, result.output
    report = json.loads((run_dir / "cf.json").read_text(encoding="utf-8"))
    assert report["q"][:6] == ["1", "1", "2", "3", "5", "8"]
    assert (run_dir / "manifest.json").exists()


def test_validation_error_exit_code(runner, run_dir):
    result = runner.invoke(cli, ["spectrum", "--set", "N=-3", "--out", str(run_dir)])
    assert result.exit_code == 2
    assert "N=-3" in result.output


def test_malformed_override(runner, run_dir):
    result = runner.invoke(cli, ["cf", "--set", "depth", "--out", str(run_dir)])
    assert result.exit_code == 2
    assert "--set" in result.output


def test_negative_threads(runner, run_dir):
    result = runner.invoke(cli, ["cf", "--threads", "-1", "--out", str(run_dir)])
    assert result.exit_code == 2


def test_config_file(runner, tmp_path):
    path = tmp_path / "cf.cfg"
    path.write_text("frequency = silver\ndepth = 5\n", encoding="utf-8")
    out = tmp_path / "out"
    result = runner.invoke(cli, ["cf", "--config", str(path), "--out", str(out)])
    assert result.exit_code == 0, result.output
    report = json.loads((out / "cf.json").read_text(encoding="utf-8"))
    assert report["partial_quotients"] == ["2", "2", "2", "2", "2"]


def test_runner_receives_resolved_config(runner, run_dir, mocker):
    execute = mocker.patch("app.commands.experiments.ExperimentRunner")
    execute.return_value.execute.return_value.warnings = ["coarse grid"]
    result = runner.invoke(cli, ["lyapunov", "--set", "coupling=0.4", "--threads", "2", "--out", str(run_dir)])
    assert result.exit_code == 0, result.output
    config, store, threads = execute.call_args.args
    assert config.coupling == 0.4
    assert threads == 2
    execute.return_value.execute.assert_called_once_with("lyapunov")
    assert "warning: coarse grid" in result.output


def test_selftest_failure_exit_code(runner, mocker):
    report = SelfTestReport(checks=[
        SelfTestCheck(name="good", passed=True, detail="fine", seconds=0.0),
        SelfTestCheck(name="bad", passed=False, detail="off by one", seconds=0.0),
    ])
    mocker.patch("app.commands.selftest.SelfTest").return_value.run.return_value = report
    result = runner.invoke(cli, ["selftest"])
    assert result.exit_code == 1
    assert "FAIL" in result.output
    assert "1/2 checks passed" in result.output


def test_selftest_success_exit_code(runner, mocker):
    report = SelfTestReport(checks=[SelfTestCheck(name="good", passed=True, detail="fine", seconds=0.0)])
    mocker.patch("app.commands.selftest.SelfTest").return_value.run.return_value = report
    result = runner.invoke(cli, ["selftest"])
    assert result.exit_code == 0
