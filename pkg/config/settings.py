"""
Experiment settings and configuration
"""

import copy
import hashlib
import json
import logging
import os
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass
from pathlib import Path

from utils.algorithms import AlgorithmConfig
from utils.exceptions import ConfigurationError
from utils.serialization_utils import dumps_canonical

logger = logging.getLogger(__name__)

WORKERS_ENV = "RSA_LAB_WORKERS"

VERIFY_CONTRACTION = "contraction"
VERIFY_CONCENTRATION = "concentration"
VERIFY_BOTH = "both"
VERIFY_MODES = (VERIFY_CONTRACTION, VERIFY_CONCENTRATION, VERIFY_BOTH)

# sections whose keys are fixed by the defaults
STRICT_SECTIONS = ("problem", "initial", "run", "verify", "output")


def deep_merge(base, overrides):
    """Recursively merge overrides into a copy of base"""
    merged = copy.deepcopy(base)
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def parse_override(text):
    """
    Parse a --set override of the form section.key=value

    Values are read as JSON when possible (numbers, booleans, lists, null)
    and kept as plain strings otherwise.

    Returns:
        tuple: (list of key parts, value)
    """
    if "=" not in text:
        raise ConfigurationError(f"Override must look like section.key=value, got {text!r}")
    path, raw = text.split("=", 1)
    keys = [part for part in path.strip().split(".") if part]
    if len(keys) < 2:
        raise ConfigurationError(f"Override key must name a section and a field, got {path!r}")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return keys, value


class Settings:
    """Experiment settings manager: defaults, loaded file, CLI overrides"""

    def __init__(self, config_file=None, overrides=None):
        self.config_file = Path(config_file) if config_file else None
        self.default_settings = {
            "name": None,
            "problem": {
                "family": "quadratic",
                "instance": None,
                "d": 5,
                "N": 10,
                "c": 1.0,
                "L": 2.0,
                "seed": 0,
                "a_scale": 1.0,
                "composite": {"kind": "zero", "lambda": 0.0},
            },
            "algorithm": {},
            "divergence": {"variant": "auto"},
            "initial": {"law": "gaussian", "radius": 1.0, "vary": False, "x_a": None, "x_b": None},
            "run": {"K": 100, "R": 100, "seed": 0, "projection_radius": None, "independent": False},
            "verify": {
                "mode": VERIFY_CONTRACTION,
                "window": 0.5,
                "tail_kappa": None,
                "concentration_level": 1e-6,
                "max_diverged_fraction": 0.001,
            },
            "output": {"directory": "results", "hex_floats": True},
        }

        self.settings = self.load_settings()
        for override in overrides or []:
            self.apply_override(override)

    def load_settings(self):
        """Load the experiment file (TOML or JSON) merged over the defaults"""
        if self.config_file is None:
            logger.info("No experiment file given, using defaults")
            return copy.deepcopy(self.default_settings)
        if not self.config_file.exists():
            raise ConfigurationError(f"Experiment file not found: {self.config_file}")
        try:
            if self.config_file.suffix == ".toml":
                with open(self.config_file, "rb") as f:
                    loaded_settings = tomllib.load(f)
            else:
                with open(self.config_file, "r", encoding="utf-8") as f:
                    loaded_settings = json.load(f)
            loaded_settings.pop("description", None)

            settings = deep_merge(self.default_settings, loaded_settings)
            if settings["name"] is None:
                settings["name"] = self.config_file.stem
            self._resolve_paths(settings)
            logger.info(f"Settings loaded from {self.config_file}")
            return settings

        except (tomllib.TOMLDecodeError, json.JSONDecodeError) as e:
            logger.error(f"Error loading settings: {str(e)}")
            raise ConfigurationError(f"Malformed experiment file {self.config_file}: {e}") from e

    def _resolve_paths(self, settings):
        instance = settings["problem"].get("instance")
        if instance and not os.path.isabs(instance):
            settings["problem"]["instance"] = str(self.config_file.parent / instance)

    def apply_override(self, text):
        keys, value = parse_override(text)
        target = self.settings
        for key in keys[:-1]:
            if not isinstance(target.get(key), dict):
                target[key] = {}
            target = target[key]
        target[keys[-1]] = value
        logger.debug(f"Override {'.'.join(keys)} = {value!r}")

    def get(self, key, default=None):
        """Get setting value"""
        return self.settings.get(key, default)

    def set(self, key, value):
        """Set setting value"""
        self.settings[key] = value

    def effective_config(self):
        return copy.deepcopy(self.settings)

    def config_hash(self):
        """SHA-256 over the canonical JSON of the effective config"""
        return hashlib.sha256(dumps_canonical(self.settings).encode("utf-8")).hexdigest()

    def get_output_directory(self):
        """Get output directory, create if not exists"""
        output_dir = self.settings["output"]["directory"]
        os.makedirs(output_dir, exist_ok=True)
        return output_dir

    @staticmethod
    def get_worker_count():
        """Worker count from RSA_LAB_WORKERS (default 1)"""
        raw = os.environ.get(WORKERS_ENV, "1")
        try:
            workers = int(raw)
        except ValueError as e:
            raise ConfigurationError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from e
        if workers < 1:
            raise ConfigurationError(f"{WORKERS_ENV} must be at least 1, got {workers}")
        return workers


def _reject_unknown_keys(data, defaults):
    unknown = sorted(set(data) - set(defaults))
    if unknown:
        raise ConfigurationError(f"Unknown experiment sections: {unknown}")
    for section in STRICT_SECTIONS:
        if not isinstance(data[section], dict):
            raise ConfigurationError(f"Section [{section}] must be a table, got {data[section]!r}")
        unknown = sorted(set(data[section]) - set(defaults[section]))
        if unknown:
            raise ConfigurationError(f"Unknown keys in [{section}]: {unknown}. Known: {sorted(defaults[section])}")


@dataclass
class ExperimentConfig:
    """Validated experiment description built from Settings"""

    name: str
    problem: dict
    algorithm: AlgorithmConfig
    divergence: dict
    initial: dict
    K: int
    R: int
    seed: int
    projection_radius: float
    independent: bool
    verify: dict
    output: dict
    effective: dict
    config_hash: str

    @classmethod
    def from_settings(cls, settings):
        """
        Validate settings and build the experiment config

        Args:
            settings (Settings): Merged settings

        Returns:
            ExperimentConfig: Validated config
        """
        data = settings.effective_config()
        _reject_unknown_keys(data, settings.default_settings)
        if not data.get("algorithm"):
            raise ConfigurationError("Experiment config needs an [algorithm] section with kind and eta")
        run = data["run"]
        for key in ("K", "R"):
            if int(run[key]) < 1:
                raise ConfigurationError(f"run.{key} must be at least 1, got {run[key]}")
        verify = data["verify"]
        if verify["mode"] not in VERIFY_MODES:
            raise ConfigurationError(f"Unknown verification mode {verify['mode']!r}; use one of {VERIFY_MODES}")
        if not 0 < float(verify["window"]) <= 1:
            raise ConfigurationError(f"verify.window must lie in (0, 1], got {verify['window']}")
        if data["problem"]["family"] not in ("quadratic", "nonlinear"):
            raise ConfigurationError(f"Unknown problem family: {data['problem']['family']}")
        if data["initial"]["law"] not in ("gaussian", "point"):
            raise ConfigurationError(f"Unknown initial-state law: {data['initial']['law']}")
        return cls(
            name=data.get("name") or "experiment",
            problem=data["problem"],
            algorithm=AlgorithmConfig.from_dict(data["algorithm"]),
            divergence=data["divergence"],
            initial=data["initial"],
            K=int(run["K"]),
            R=int(run["R"]),
            seed=int(run["seed"]),
            projection_radius=run.get("projection_radius"),
            independent=bool(run.get("independent", False)),
            verify=verify,
            output=data["output"],
            effective=data,
            config_hash=settings.config_hash(),
        )
