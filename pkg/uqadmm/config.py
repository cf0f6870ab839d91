"""Configuration helpers for runtime settings and experiment run files."""

from __future__ import annotations

import logging
import os
from dataclasses import asdict, dataclass, fields, replace
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, Optional

LOGGER = logging.getLogger(__name__)


class ConfigError(ValueError):
    """Raised when a run configuration file is missing, malformed or inconsistent."""


def _load_env_file() -> None:
    """Load variables from a local ``.env`` file when available."""

    env_path = os.path.join(os.path.dirname(os.path.dirname(__file__)), ".env")
    if not os.path.exists(env_path):
        LOGGER.debug("No .env file found at %s", env_path)
        return

    try:
        from dotenv import load_dotenv

        load_dotenv(env_path)
        LOGGER.info("Loaded environment variables from %s", env_path)
    except ImportError:  # pragma: no cover - optional dependency
        LOGGER.warning("python-dotenv not installed; skipping .env loading")


_load_env_file()


class Config:
    """Central access point for runtime configuration."""

    # Logging ------------------------------------------------------------------
    LOG_LEVEL: str = os.getenv("UQADMM_LOG_LEVEL", "INFO").upper()

    # Dense routines -----------------------------------------------------------
    ORACLE_CAP: int = int(os.getenv("UQADMM_ORACLE_CAP", "500"))
    EIG_CAP: int = int(os.getenv("UQADMM_EIG_CAP", "4096"))

    # Weights ------------------------------------------------------------------
    WEIGHT_FLOOR: float = float(os.getenv("UQADMM_WEIGHT_FLOOR", "1e-6"))
    WEIGHT_CAP: float = float(os.getenv("UQADMM_WEIGHT_CAP", "1e6"))

    # Parallelism --------------------------------------------------------------
    MAX_WORKERS: int = int(os.getenv("UQADMM_MAX_WORKERS", str(os.cpu_count() or 1)))

    @classmethod
    def validate(cls) -> bool:
        """Validate that the active configuration is usable."""

        ok = True
        if not 0 < cls.WEIGHT_FLOOR < cls.WEIGHT_CAP:
            LOGGER.warning(
                "Weight clamp bounds are inconsistent (floor=%s, cap=%s)",
                cls.WEIGHT_FLOOR,
                cls.WEIGHT_CAP,
            )
            ok = False
        if cls.ORACLE_CAP < 1 or cls.EIG_CAP < 1:
            LOGGER.warning("Dense size caps must be positive")
            ok = False
        if cls.MAX_WORKERS < 1:
            LOGGER.warning("UQADMM_MAX_WORKERS must be at least 1")
            ok = False
        return ok


if not Config.validate():  # pragma: no cover
    LOGGER.warning("Configuration validation failed - falling back to built-in defaults")
    Config.WEIGHT_FLOOR, Config.WEIGHT_CAP = 1e-6, 1e6
    Config.ORACLE_CAP, Config.EIG_CAP, Config.MAX_WORKERS = 500, 4096, 1


# ----------------------------------------------------------------------
# Run configuration files
# ----------------------------------------------------------------------
@dataclass(frozen=True)
class RunConfig:
    """One experiment run, fully determined by a flat ``key=value`` file."""

    # problem
    problem: str = "identity_quadrants"
    grid_n: int = 64
    band: int = 3
    sigma: float = 0.7
    n_angles: int = 90
    n_detectors: int = 0  # 0 -> grid_n detectors
    matrix: str = ""
    manifest: str = ""
    noise_level: Optional[float] = None  # None -> generator default
    # splitting
    splitting: str = ""  # "" -> generator default (quadrant or row_blocks)
    n_splits: int = 4
    # prior
    prior: str = "smallness"
    alpha: float = 1e-2
    # weights
    weights: str = "uq"  # uq | identity
    rank: int = 10
    weight_method: str = "lanczos"  # lanczos | eig
    oversample: int = 5
    # solver
    solver: str = "admm_sync"
    rho0: float = 5.0
    max_outer: int = 10
    eps_pri: Optional[float] = None
    eps_dual: Optional[float] = None
    inner_max_outer: int = 3
    max_pcg: int = 200
    pcg_tol: float = 1e-10
    init: str = "reference"
    executor: str = "serial"
    # async
    n_a: int = 4
    k_a: int = 1
    latency: str = "fixed:1.0"
    z_update: str = "all_cached"
    scheduler: str = "simulated"  # simulated | parallel
    # bookkeeping
    seed: int = 0
    out: str = "out"

    def with_overrides(self, **overrides: Any) -> "RunConfig":
        """Return a copy with ``None``-valued overrides ignored."""

        changes = {key: value for key, value in overrides.items() if value is not None}
        return replace(self, **changes) if changes else self

    def as_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def header_lines(self) -> list:
        """Render the config as ``key=value`` lines for file headers."""

        lines = []
        for key, value in self.as_dict().items():
            lines.append(f"{key}={'' if value is None else value}")
        return lines


_OPTIONAL_FLOATS = {"noise_level", "eps_pri", "eps_dual"}


def _coerce(name: str, raw: Optional[str], target: type) -> Any:
    if raw is None or raw.strip() == "":
        if name in _OPTIONAL_FLOATS:
            return None
        return "" if target is str else None
    raw = raw.strip()
    try:
        if name in _OPTIONAL_FLOATS or target is float:
            return float(raw)
        if target is int:
            return int(raw)
    except ValueError as exc:
        raise ConfigError(f"Config key '{name}' expects {target.__name__}, got '{raw}'") from exc
    return raw


@lru_cache(maxsize=None)
def _field_types() -> Dict[str, type]:
    defaults = RunConfig()
    types: Dict[str, type] = {}
    for item in fields(RunConfig):
        value = getattr(defaults, item.name)
        types[item.name] = float if item.name in _OPTIONAL_FLOATS else type(value)
    return types


def parse_run_config(values: Dict[str, Optional[str]]) -> RunConfig:
    """Build a :class:`RunConfig` from raw string values, rejecting unknown keys."""

    types = _field_types()
    unknown = sorted(set(values) - set(types))
    if unknown:
        raise ConfigError(f"Unknown config keys: {unknown}. Known keys: {sorted(types)}")

    kwargs = {}
    for key, raw in values.items():
        value = _coerce(key, raw, types[key])
        if value is None and key not in _OPTIONAL_FLOATS:
            continue
        kwargs[key] = value
    return RunConfig(**kwargs)


def load_run_config(path: Optional[str]) -> RunConfig:
    """Read a flat ``key=value`` run file (dotenv syntax) into a :class:`RunConfig`."""

    if not path:
        return RunConfig()

    config_path = Path(path)
    if not config_path.is_file():
        raise ConfigError(f"Config file not found: {config_path}")

    from dotenv import dotenv_values

    values = dotenv_values(config_path)
    LOGGER.info("Loaded run config from %s (%s keys)", config_path, len(values))
    return parse_run_config(dict(values))
