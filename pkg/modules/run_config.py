"""
Run Configuration
Nested JSON configuration with defaults, `section.key=value` overrides and
validation against the known sections.
"""

import copy
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Iterable, Optional

from .dp_oracle import INTERPOLATIONS
from .errors import ConfigurationError, InvalidParameterError
from .model_core import ModelParams

logger = logging.getLogger(__name__)

POPULATION_MODES = ("random-redraw", "fixed-split")
TARGETS = ("ess", "coop")


def default_config() -> Dict[str, Any]:
    """Baseline run: a=1, b=1, c=2, T=2 from (p0, n0) = (0.3, 1)."""
    return {
        "model": {"a": 1.0, "b": 1.0, "c": 2.0, "T": 2.0},
        "initial": {"p0": 0.3, "n0": 1.0},
        "integrator": {"step_divisor": 20000, "degeneracy_tol": 1e-9},
        "field": {"boundary_samples": 4096, "band_factor": 1e-6},
        "game": {
            "segments": 2000,
            "max_iterations": 5000,
            "gradient_tol": 1e-6,
            "cert_tolerance": 1e-3,
            "uniqueness_spread": 1e-2,
            "dp_x_nodes": 401,
            "dp_x_max_factor": 1.5,
            "dp_controls": 21,
        },
        "oracle": {
            "t_steps": 2000,
            "x_steps": 2000,
            "control_steps": 21,
            "full_t_steps": 60,
            "full_p_steps": 161,
            "full_n_steps": 121,
            "probes": [0.1, 0.2, 0.3, 0.45, 0.6],
            "interpolation": "pchip",
        },
        "hjb": {"nt": 200, "nx": 200, "x_max_factor": 2.0, "steps": 20, "exclusion_cells": 2},
        "population": {
            "N": 10000,
            "tau_divisor": 10000,
            "mode": "random-redraw",
            "seeds": 10,
            "target_u": "ess",
            "sweep_halvings": 4,
        },
        "run": {"seed": 0, "jobs": 1, "output_dir": "output"},
    }


def _type_ok(value: Any, default: Any, key: str) -> bool:
    if key == "target_u":
        return (isinstance(value, str) or isinstance(value, (int, float))) and not isinstance(value, bool)
    if isinstance(default, bool):
        return isinstance(value, bool)
    if isinstance(default, int):
        return isinstance(value, int) and not isinstance(value, bool)
    if isinstance(default, float):
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if isinstance(default, list):
        return isinstance(value, list) and all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in value
        )
    return isinstance(value, type(default))


def validate_config(config: Dict[str, Any]) -> None:
    """Reject unknown sections or keys, type mismatches and out-of-range values."""
    defaults = default_config()
    if not isinstance(config, dict):
        raise ConfigurationError("configuration must be a JSON object")
    for section, values in config.items():
        if section not in defaults:
            raise ConfigurationError(f"unknown configuration section '{section}'")
        if not isinstance(values, dict):
            raise ConfigurationError(f"section '{section}' must be an object")
        for key, value in values.items():
            if key not in defaults[section]:
                raise ConfigurationError(f"unknown configuration key '{section}.{key}'")
            if not _type_ok(value, defaults[section][key], key):
                expected = type(defaults[section][key]).__name__
                raise ConfigurationError(f"'{section}.{key}' expects {expected}, got {value!r}")

    merged = merge_with_defaults(config)
    for key in ("a", "b", "c", "T"):
        if merged["model"][key] <= 0:
            raise InvalidParameterError(f"model.{key} must be strictly positive")
    if merged["initial"]["p0"] < 0 or merged["initial"]["n0"] <= 0:
        raise ConfigurationError("initial state needs p0 >= 0 and n0 > 0")
    positive_ints = [
        ("integrator", "step_divisor"), ("field", "boundary_samples"), ("game", "segments"),
        ("game", "dp_x_nodes"), ("game", "dp_controls"), ("oracle", "t_steps"), ("oracle", "x_steps"),
        ("oracle", "full_t_steps"), ("hjb", "nt"), ("hjb", "nx"), ("hjb", "steps"),
        ("population", "N"), ("population", "tau_divisor"), ("population", "seeds"), ("run", "jobs"),
    ]
    for section, key in positive_ints:
        if merged[section][key] < 1:
            raise ConfigurationError(f"'{section}.{key}' must be at least 1")
    if merged["oracle"]["control_steps"] < 11:
        raise ConfigurationError("'oracle.control_steps' must be at least 11")
    if merged["oracle"]["interpolation"] not in INTERPOLATIONS:
        raise ConfigurationError(f"'oracle.interpolation' must be one of {', '.join(INTERPOLATIONS)}")
    if merged["population"]["mode"] not in POPULATION_MODES:
        raise ConfigurationError(f"'population.mode' must be one of {', '.join(POPULATION_MODES)}")
    target = merged["population"]["target_u"]
    if isinstance(target, str) and target not in TARGETS:
        raise ConfigurationError(f"'population.target_u' must be a number in [0, 1] or one of {TARGETS}")
    if not isinstance(target, str) and not 0.0 <= target <= 1.0:
        raise ConfigurationError("'population.target_u' must lie in [0, 1]")


def merge_with_defaults(config: Dict[str, Any]) -> Dict[str, Any]:
    merged = default_config()
    for section, values in config.items():
        merged.setdefault(section, {}).update(values)
    return merged


def load_config(path: Optional[str], required: bool = True) -> Dict[str, Any]:
    """Read a JSON config file and merge it over the defaults."""
    if path is None:
        return default_config()
    config_path = Path(path)
    if not config_path.exists():
        if required:
            raise ConfigurationError(f"configuration file {config_path} not found")
        logger.info(f"No configuration at {config_path}, using defaults")
        return default_config()
    try:
        with open(config_path, "r", encoding="utf-8") as f:
            raw = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"cannot parse {config_path}: {e.msg} at line {e.lineno}, column {e.colno}") from e
    validate_config(raw)
    logger.info(f"Configuration loaded from {config_path}")
    return merge_with_defaults(raw)


def _parse_value(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(config: Dict[str, Any], overrides: Iterable[str]) -> Dict[str, Any]:
    """Apply `section.key=value` items; values parse as JSON literals, else strings."""
    result = copy.deepcopy(config)
    for item in overrides or []:
        if "=" not in item:
            raise ConfigurationError(f"override '{item}' is not of the form section.key=value")
        dotted, text = item.split("=", 1)
        if "." not in dotted:
            raise ConfigurationError(f"override '{item}' needs a section.key name")
        section, key = dotted.strip().split(".", 1)
        result.setdefault(section, {})[key] = _parse_value(text.strip())
    validate_config(result)
    return result


@dataclass(frozen=True)
class RunConfig:
    """Validated view of a configuration used by the command handlers."""

    raw: Dict[str, Any]
    params: ModelParams
    p0: float
    n0: float
    step: float
    seed: int
    jobs: int
    output_dir: str

    @classmethod
    def from_config(cls, config: Dict[str, Any]) -> "RunConfig":
        validate_config(config)
        merged = merge_with_defaults(config)
        params = ModelParams.from_config(merged["model"], merged["integrator"]["degeneracy_tol"])
        return cls(
            raw=merged,
            params=params,
            p0=float(merged["initial"]["p0"]),
            n0=float(merged["initial"]["n0"]),
            step=params.T / merged["integrator"]["step_divisor"],
            seed=int(merged["run"]["seed"]),
            jobs=int(merged["run"]["jobs"]),
            output_dir=str(merged["run"]["output_dir"]),
        )

    def section(self, name: str) -> Dict[str, Any]:
        return self.raw.get(name, {})
