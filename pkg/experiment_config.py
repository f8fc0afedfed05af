"""
Experiment configuration.

Values are resolved in the order CLI flag > JSON config file > environment
(.env via python-dotenv) > built-in default.
"""
import json
import logging
import math
import os
from dataclasses import asdict, dataclass, fields, replace
from typing import Any, Dict, Optional

from phase_space import BinningScheme, SplitScenario

logger = logging.getLogger(__name__)

FULL_SCALE_SHOTS = 2_000_000

# (n_eve, n_alice) pairs of the splitting-ratio sweep
REFERENCE_SPLITS = [
    (1.04, 14.60), (2.01, 12.78), (2.73, 11.98), (4.06, 9.64), (4.64, 8.40),
    (4.59, 7.49), (5.02, 6.24), (5.58, 5.12), (6.34, 3.87), (6.89, 2.97),
    (7.09, 2.28), (7.53, 1.54), (7.70, 0.82), (7.90, 0.57), (8.05, 0.22),
]

INJECT_MODES = (None, "zeros", "alternating")

# Environment variable for every key that can come from the environment
ENV_KEYS = {
    "seed": "QRNG_SEED",
    "shots": "QRNG_SHOTS",
    "workers": "QRNG_WORKERS",
    "out_dir": "QRNG_OUT_DIR",
    "log_level": "QRNG_LOG_LEVEL",
    "electronic_noise": "QRNG_ELECTRONIC_NOISE",
    "coherence_ratio": "QRNG_COHERENCE_RATIO",
}


class ConfigError(ValueError):
    """Invalid configuration value; `key` names the offending setting."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 20190521
    shots: int = 200_000
    workers: int = 1
    out_dir: str = "runs"
    log_level: str = "INFO"
    electronic_noise: float = 1.0
    coherence_ratio: float = math.inf
    alice_phase: float = 0.0
    bin_width: float = 0.15625
    bin_count: int = 256
    bin_center: float = 0.0
    hash_rows: int = 16
    hash_cols: int = 32
    hash_seed: Optional[int] = None
    significance: float = 0.01
    fig3_n_alice: float = 5.0
    fig3_points: int = 10
    fig3_n_eve_min: float = 0.01
    fig3_n_eve_max: float = 500.0
    n_alice: float = 5.12
    n_eve: float = 5.58
    inject: Optional[str] = None
    dump_shots: bool = False
    paper_scale: bool = False

    def validate(self) -> "ExperimentConfig":
        """Check every value; raises ConfigError naming the first bad key."""
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed", f"must be an unsigned 64-bit integer, got {self.seed}")
        if self.shots < 2:
            raise ConfigError("shots", f"must be at least 2, got {self.shots}")
        if self.workers < 1:
            raise ConfigError("workers", f"must be positive, got {self.workers}")
        if not self.out_dir:
            raise ConfigError("out_dir", "must not be empty")
        if self.log_level.upper() not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
            raise ConfigError("log_level", f"unknown level {self.log_level!r}")
        if not self.electronic_noise >= 1.0:
            raise ConfigError("electronic_noise", f"must be >= 1, got {self.electronic_noise}")
        if not self.coherence_ratio >= 0:
            raise ConfigError("coherence_ratio", f"must be >= 0, got {self.coherence_ratio}")
        if not math.isfinite(self.alice_phase):
            raise ConfigError("alice_phase", "must be finite")
        if not self.bin_width > 0:
            raise ConfigError("bin_width", f"must be positive, got {self.bin_width}")
        if self.bin_count < 2 or self.bin_count % 2:
            raise ConfigError("bin_count", f"must be an even integer >= 2, got {self.bin_count}")
        if self.hash_cols % 8 or self.hash_cols < 8 or self.hash_cols > 64:
            raise ConfigError("hash_cols", f"must be a multiple of 8 in [8, 64], got {self.hash_cols}")
        if self.hash_rows * 2 != self.hash_cols:
            raise ConfigError("hash_rows", f"must be half of hash_cols ({self.hash_cols // 2}), got {self.hash_rows}")
        if self.hash_seed is not None and not 0 <= self.hash_seed < 2 ** 64:
            raise ConfigError("hash_seed", f"must be an unsigned 64-bit integer, got {self.hash_seed}")
        if not 0 < self.significance < 1:
            raise ConfigError("significance", f"must lie in (0, 1), got {self.significance}")
        if not self.fig3_n_alice >= 0:
            raise ConfigError("fig3_n_alice", f"must be >= 0, got {self.fig3_n_alice}")
        if self.fig3_points < 2:
            raise ConfigError("fig3_points", f"must be at least 2, got {self.fig3_points}")
        if not 0 < self.fig3_n_eve_min < self.fig3_n_eve_max:
            raise ConfigError("fig3_n_eve_min", "must satisfy 0 < fig3_n_eve_min < fig3_n_eve_max")
        if not self.n_alice >= 0:
            raise ConfigError("n_alice", f"must be >= 0, got {self.n_alice}")
        if not self.n_eve >= 0:
            raise ConfigError("n_eve", f"must be >= 0, got {self.n_eve}")
        if self.inject not in INJECT_MODES:
            raise ConfigError("inject", f"must be one of zeros, alternating; got {self.inject!r}")
        return self

    @property
    def binning(self) -> BinningScheme:
        return BinningScheme(bin_width=self.bin_width, bin_count=self.bin_count, center=self.bin_center)

    @property
    def matrix_seed(self) -> int:
        return self.seed if self.hash_seed is None else self.hash_seed

    def scenario(self, n_eve: float, n_alice: float, **overrides) -> SplitScenario:
        """Split scenario for one photon-number pair using this config's settings."""
        settings = dict(
            alice_phase=self.alice_phase,
            electronic_noise_factor=self.electronic_noise,
            coherence_ratio=self.coherence_ratio,
            shots=self.shots,
            seed=self.seed,
            binning=self.binning,
        )
        settings.update(overrides)
        return SplitScenario.from_photon_numbers(n_eve, n_alice, **settings)

    def with_overrides(self, **changes) -> "ExperimentConfig":
        return replace(self, **changes).validate()

    def to_dict(self) -> Dict[str, Any]:
        """JSON-safe view; infinity is written as the string "inf"."""
        data = asdict(self)
        if math.isinf(data["coherence_ratio"]):
            data["coherence_ratio"] = "inf"
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ExperimentConfig":
        """Build from a mapping; unknown keys are rejected by name."""
        known = {f.name: f for f in fields(cls)}
        values = {}
        for key, raw in data.items():
            if key not in known:
                raise ConfigError(key, "unknown configuration key")
            values[key] = _coerce(key, raw, cls.__dataclass_fields__[key].default)
        return cls(**values).validate()


def _coerce(key: str, raw: Any, default: Any) -> Any:
    """Convert a raw value (string from env or JSON value) to the field's type."""
    if raw is None:
        return None
    try:
        if isinstance(default, bool):
            if isinstance(raw, str):
                if raw.strip().lower() in ("1", "true", "yes", "on"):
                    return True
                if raw.strip().lower() in ("0", "false", "no", "off", ""):
                    return False
                raise ValueError(raw)
            return bool(raw)
        if isinstance(default, int) or key in ("hash_seed",):
            if isinstance(raw, float) and not raw.is_integer():
                raise ValueError(raw)
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        return str(raw)
    except (TypeError, ValueError):
        raise ConfigError(key, f"cannot interpret {raw!r}")


def env_values() -> Dict[str, Any]:
    """Settings present in the environment."""
    values = {}
    for key, variable in ENV_KEYS.items():
        raw = os.getenv(variable)
        if raw is not None and raw != "":
            values[key] = raw
    return values


def load_json(path: str) -> Dict[str, Any]:
    """Read a JSON config document; the top level must be an object."""
    with open(path, "r", encoding="utf-8") as handle:
        try:
            data = json.load(handle)
        except json.JSONDecodeError as e:
            raise ConfigError("config", f"{path} is not valid JSON: {e}")
    if not isinstance(data, dict):
        raise ConfigError("config", f"{path} must contain a JSON object")
    return data


def resolve_config(cli_values: Optional[Dict[str, Any]] = None,
                   config_path: Optional[str] = None) -> ExperimentConfig:
    """
    Merge all configuration sources.

    Args:
        cli_values: Values given on the command line (None entries are ignored)
        config_path: Optional JSON config document

    Returns:
        Validated ExperimentConfig
    """
    merged: Dict[str, Any] = {}
    merged.update(env_values())
    if config_path:
        merged.update(load_json(config_path))
    cli_values = {k: v for k, v in (cli_values or {}).items() if v is not None}
    merged.update(cli_values)

    # an explicit shot count from any source beats --paper-scale
    paper_scale = _coerce("paper_scale", merged.get("paper_scale", False), False)
    if paper_scale and "shots" not in merged:
        merged["shots"] = FULL_SCALE_SHOTS

    config = ExperimentConfig.from_dict(merged)
    logger.debug(f"Resolved config: {config.to_dict()}")
    return config
