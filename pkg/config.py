# config.py
"""
Configuration management for quadlab.
Loads settings from environment variables, a key=value config file and
command-line flags, with validation and type safety.
"""

import dataclasses
import logging
import os
from pathlib import Path
from typing import Any, Callable, Dict, List, Mapping, Optional

from dotenv import dotenv_values, load_dotenv

from errors import ConfigError
from models import Command, RunConfig, UINT64_MAX

# Load environment variables from .env file
load_dotenv()

logger = logging.getLogger(__name__)

ENV_PREFIX = "QUADLAB_"
THREADS_ENV = "QUADLAB_THREADS"

__all__ = ["ConfigError", "load_config", "parse_value", "validate_config"]


def _parse_int(text: str) -> int:
    try:
        return int(text)
    except ValueError:
        value = float(text)
        if not value.is_integer():
            raise
        return int(value)


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "1", "yes", "on"):
        return True
    if lowered in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text}")


def _parse_optional_float(text: str) -> Optional[float]:
    if text.strip().lower() in ("", "none", "auto"):
        return None
    return float(text)


def _list_of(parse: Callable[[str], Any]) -> Callable[[str], List[Any]]:
    def parse_list(text: str) -> List[Any]:
        return [parse(item) for item in text.split(",") if item.strip()]
    return parse_list


_PARSERS: Dict[str, Callable[[str], Any]] = {
    "command": Command,
    "epsilon": float,
    "bound": _parse_int,
    "bounds": _list_of(_parse_int),
    "include_d1": _parse_bool,
    "memory_budget_mb": _parse_int,
    "lambda_value": _parse_optional_float,
    "lambda_exponent": float,
    "lambda_cap": _parse_int,
    "consistency_tol": _parse_optional_float,
    "audit_fraction": float,
    "large_value_factor": float,
    "k_max": _parse_int,
    "prime_cutoff": _parse_int,
    "samples": _parse_int,
    "seed": _parse_int,
    "taus": _list_of(float),
    "grid_min": float,
    "grid_max": float,
    "grid_points": _parse_int,
    "k_values": _list_of(_parse_int),
    "n_values": _list_of(_parse_int),
    "eta": float,
    "threads": _parse_int,
    "out_dir": str,
    "log_level": str,
    "log_format": str,
}


def parse_value(key: str, text: str) -> Any:
    """
    Convert one textual setting to its typed value.

    Args:
        key: Field name of RunConfig
        text: Raw value

    Returns:
        Typed value

    Raises:
        ConfigError: If the key is unknown or the value does not parse
    """
    parser = _PARSERS.get(key)
    if parser is None:
        raise ConfigError(f"unknown configuration key '{key}'")
    try:
        return parser(text)
    except ValueError as e:
        raise ConfigError(f"invalid value for '{key}': {text!r} ({e})") from e


def _from_environment(environ: Mapping[str, str]) -> Dict[str, Any]:
    """Typed settings from QUADLAB_* variables; QUADLAB_THREADS sets the thread budget."""
    values: Dict[str, Any] = {}
    for key in _PARSERS:
        raw = environ.get(ENV_PREFIX + key.upper())
        if raw:
            values[key] = parse_value(key, raw)
    return values


def _from_file(path: Path) -> Dict[str, Any]:
    """Typed settings from a flat key=value file."""
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    raw = dotenv_values(path)
    values = {}
    for key, text in raw.items():
        if text is None:
            raise ConfigError(f"config key '{key}' in {path} has no value")
        values[key.strip().lower()] = parse_value(key.strip().lower(), text)
    logger.info(f"Loaded {len(values)} settings from {path}")
    return values


def validate_config(config: RunConfig) -> RunConfig:
    """
    Check cross-field constraints.

    Raises:
        ConfigError: Naming the first offending key
    """
    if not 0.0 < config.epsilon < 0.5:
        raise ConfigError(f"'epsilon' must lie in (0, 1/2), got {config.epsilon}")
    if config.bound < 1:
        raise ConfigError(f"'bound' must be >= 1, got {config.bound}")
    if not config.bounds or config.bounds != sorted(set(config.bounds)) or config.bounds[0] < 1:
        raise ConfigError(f"'bounds' must be strictly increasing and >= 1, got {config.bounds}")
    if config.lambda_value is not None and (
        config.lambda_value < 2.5 or (config.lambda_value - 0.5) % 1 != 0
    ):
        raise ConfigError(f"'lambda_value' must lie in Z + 1/2 and be >= 2.5, got {config.lambda_value}")
    if config.prime_cutoff < 2:
        raise ConfigError(f"'prime_cutoff' must be >= 2, got {config.prime_cutoff}")
    if config.samples < 1:
        raise ConfigError(f"'samples' must be >= 1, got {config.samples}")
    if not 0 <= config.seed <= UINT64_MAX:
        raise ConfigError(f"'seed' must be an unsigned 64-bit integer, got {config.seed}")
    if config.threads < 1:
        raise ConfigError(f"'threads' must be >= 1, got {config.threads}")
    if not 1 <= config.k_max <= 64:
        raise ConfigError(f"'k_max' must lie in 1..64, got {config.k_max}")
    if any(k < 1 for k in config.k_values):
        raise ConfigError(f"'k_values' must be positive, got {config.k_values}")
    if any(k > config.k_max for k in config.k_values):
        raise ConfigError(f"'k_values' exceed 'k_max'={config.k_max}, got {config.k_values}")
    if config.grid_points < 3 or config.grid_min >= config.grid_max:
        raise ConfigError("'grid_min', 'grid_max', 'grid_points' must describe an increasing grid")
    if config.consistency_tol is not None and config.consistency_tol <= 0:
        raise ConfigError(f"'consistency_tol' must be positive, got {config.consistency_tol}")
    if not 0.0 <= config.audit_fraction <= 1.0:
        raise ConfigError(f"'audit_fraction' must lie in [0, 1], got {config.audit_fraction}")
    try:
        Path(config.out_dir).resolve()
    except (OSError, RuntimeError) as e:
        raise ConfigError(f"'out_dir' cannot be resolved: {config.out_dir} ({e})") from e
    return config


def load_config(
    overrides: Optional[Mapping[str, Any]] = None,
    config_file: Optional[Path] = None,
    environ: Optional[Mapping[str, str]] = None,
) -> RunConfig:
    """
    Load and validate the run configuration.

    Precedence, lowest first: defaults, QUADLAB_* environment, config file,
    explicit overrides (command-line flags).

    Args:
        overrides: Already typed values from flags
        config_file: Optional key=value file
        environ: Environment mapping (defaults to os.environ)

    Returns:
        RunConfig instance with all settings

    Raises:
        ConfigError: If configuration is invalid
    """
    environ = os.environ if environ is None else environ
    settings: Dict[str, Any] = {"threads": os.cpu_count() or 1}
    settings.update(_from_environment(environ))
    if config_file is not None:
        settings.update(_from_file(Path(config_file)))
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in _PARSERS:
            raise ConfigError(f"unknown configuration key '{key}'")
        settings[key] = value

    known = {f.name for f in dataclasses.fields(RunConfig)}
    return validate_config(RunConfig(**{k: v for k, v in settings.items() if k in known}))
