"""Configuration layering and validation."""

import pytest

from config import ConfigError, load_config, parse_value
from models import Command


def test_defaults():
    config = load_config(environ={})
    assert config.epsilon == 0.25
    assert config.command is Command.ENUMERATE
    assert config.prime_cutoff == 10**5
    assert config.threads >= 1
    assert config.lambda_value is None


def test_environment_overrides_defaults():
    config = load_config(environ={"QUADLAB_EPSILON": "0.1", "QUADLAB_THREADS": "3", "QUADLAB_SAMPLES": "1e4"})
    assert config.epsilon == 0.1
    assert config.threads == 3
    assert config.samples == 10**4


def test_file_overrides_environment(tmp_path):
    path = tmp_path / "run.conf"
    path.write_text("# run\nepsilon=0.2\nbounds=100,1000\ninclude_d1=false\nlambda_value=auto\n")
    config = load_config(config_file=path, environ={"QUADLAB_EPSILON": "0.1"})
    assert config.epsilon == 0.2
    assert config.bounds == [100, 1000]
    assert config.include_d1 is False
    assert config.lambda_value is None


def test_flags_override_file(tmp_path):
    path = tmp_path / "run.conf"
    path.write_text("epsilon=0.2\nseed=5\n")
    config = load_config({"epsilon": 0.3, "seed": None}, config_file=path, environ={})
    assert config.epsilon == 0.3
    assert config.seed == 5


@pytest.mark.parametrize("overrides", [
    {"epsilon": 0.5},
    {"epsilon": 0.0},
    {"bounds": [1000, 100]},
    {"bounds": [0, 10]},
    {"bound": 0},
    {"k_values": [7], "k_max": 6},
    {"lambda_value": 3.0},
    {"lambda_value": 1.5},
    {"samples": 0},
    {"seed": -1},
    {"seed": 2**64},
    {"threads": 0},
    {"k_max": 65},
    {"grid_min": 1.0, "grid_max": -1.0},
    {"audit_fraction": 1.5},
    {"consistency_tol": -1.0},
])
def test_invalid_settings(overrides):
    with pytest.raises(ConfigError):
        load_config(overrides, environ={})


def test_unknown_keys_rejected(tmp_path):
    path = tmp_path / "run.conf"
    path.write_text("epsilonn=0.2\n")
    with pytest.raises(ConfigError, match="epsilonn"):
        load_config(config_file=path, environ={})
    with pytest.raises(ConfigError):
        load_config({"colour": "red"}, environ={})
    with pytest.raises(ConfigError):
        load_config(config_file=tmp_path / "missing.conf", environ={})


def test_parse_value():
    assert parse_value("bound", "1e6") == 10**6
    assert parse_value("taus", "0, 0.5,10") == [0.0, 0.5, 10.0]
    assert parse_value("command", "sweep") is Command.SWEEP
    with pytest.raises(ConfigError, match="bound"):
        parse_value("bound", "1.5e0")
    with pytest.raises(ConfigError):
        parse_value("include_d1", "maybe")
    with pytest.raises(ConfigError):
        parse_value("command", "plot")


def test_consistency_tolerance_defaults_to_auto(tmp_path):
    assert load_config(environ={}).consistency_tol is None
    path = tmp_path / "run.conf"
    path.write_text("consistency_tol=auto\n")
    assert load_config(config_file=path, environ={}).consistency_tol is None
    path.write_text("consistency_tol=0.5\n")
    assert load_config(config_file=path, environ={}).truncation_for(1000).consistency_tol == 0.5
