from typer.testing import CliRunner

from src.cli import app
from src.experiments.schemas.config import ExperimentConfig

runner = CliRunner()


def _write_config(config: ExperimentConfig, path):
    path.write_text(config.model_dump_json(by_alias=True))
    return path


def test_help_lists_commands():
    result = runner.invoke(app, ["--help"])

    assert result.exit_code == 0
    for command in ("manifold", "linger", "simulate", "verify", "sweep", "plot-data"):
        assert command in result.output


def test_missing_config_exits_with_error(tmp_path):
    result = runner.invoke(app, ["manifold", "--config", str(tmp_path / "absent.toml")])

    assert result.exit_code == 1


def test_manifold_command_writes_a_run(tmp_path, small_config):
    path = _write_config(small_config, tmp_path / "small.json")
    out = tmp_path / "out"

    result = runner.invoke(app, ["manifold", "--config", str(path), "--out", str(out)])

    assert result.exit_code == 0, result.output
    assert any(out.glob("run-*/manifest.json"))


def test_unknown_canard_window_exits_as_assumption_violation(tmp_path, small_config):
    payload = small_config.model_dump(mode="json", by_alias=True)
    payload["manifold"]["window"] = {"y": [0.7, 0.8], "z": [0.0, 0.0]}
    path = _write_config(ExperimentConfig.model_validate(payload), tmp_path / "empty.json")

    result = runner.invoke(app, ["manifold", "--config", str(path), "--out", str(tmp_path / "out")])

    # a missing canard is an assumption violation, not an input error
    assert result.exit_code == 2


def test_linger_table_columns(tmp_path, small_config):
    path = _write_config(small_config, tmp_path / "small.json")

    result = runner.invoke(app, ["linger", "--config", str(path), "--out", str(tmp_path / "out")])

    assert result.exit_code == 0, result.output
    for column in ("oscillator", "method", "t_linger", "t_linger_min", "error"):
        assert column in result.output
    assert "quadrature" in result.output
