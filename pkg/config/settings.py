"""
Centralized Configuration

Single source of truth for process-level settings.
Loaded once at startup, shared across all modules.
"""

import logging
import os
from dataclasses import dataclass
from typing import Optional

# Only load .env in development (not in production)
if os.getenv("PYTHON_ENV") != "production":
    try:
        from dotenv import load_dotenv
        load_dotenv()
    except ImportError:
        pass  # dotenv not installed, use environment variables only

logger = logging.getLogger(__name__)

TOOL_VERSION = "1.0.0"


@dataclass(frozen=True)
class RuntimeConfig:
    """Runtime behaviour shared by every command."""
    default_seed: int
    log_level: str
    progress: bool
    jobs: int


@dataclass(frozen=True)
class OutputConfig:
    """Where run directories are created."""
    runs_dir: str


@dataclass(frozen=True)
class AppConfig:
    """Complete application configuration."""
    runtime: RuntimeConfig
    output: OutputConfig


def _get_optional_env(var_name: str, default: str = "") -> str:
    """Gets optional environment variable with default."""
    return os.getenv(var_name, default)


def _get_int_env(var_name: str, default: int) -> int:
    """Gets an integer environment variable or raises error."""
    value = os.getenv(var_name)
    if value is None or not value.strip():
        return default
    try:
        return int(value)
    except ValueError:
        raise ValueError(f"Invalid integer for {var_name}: {value!r}")


def _get_bool_env(var_name: str, default: bool) -> bool:
    value = os.getenv(var_name)
    if value is None or not value.strip():
        return default
    return value.strip().lower() in ("1", "true", "yes", "on")


def load_config() -> AppConfig:
    """
    Loads and validates all configuration from environment.
    Call once at app startup.
    """
    runtime = RuntimeConfig(
        default_seed=_get_int_env("HMMFORGE_SEED", 0),
        log_level=_get_optional_env("LOG_LEVEL", "INFO").upper(),
        progress=_get_bool_env("HMMFORGE_PROGRESS", True),
        jobs=_get_int_env("HMMFORGE_JOBS", 1),
    )

    if runtime.default_seed < 0:
        raise ValueError(f"HMMFORGE_SEED must be non-negative, got {runtime.default_seed}")
    if runtime.jobs < 1:
        raise ValueError(f"HMMFORGE_JOBS must be at least 1, got {runtime.jobs}")

    output = OutputConfig(
        runs_dir=_get_optional_env("HMMFORGE_RUNS_DIR", "runs"),
    )

    return AppConfig(runtime=runtime, output=output)


def validate_config(config: AppConfig) -> None:
    """Validates configuration and logs status."""
    logger.info("=" * 60)
    logger.info("CONFIGURATION LOADED")
    logger.info("=" * 60)
    logger.info(f"Default seed: {config.runtime.default_seed}")
    logger.info(f"Log level: {config.runtime.log_level}")
    logger.info(f"Progress bars: {config.runtime.progress}")
    logger.info(f"Sweep workers: {config.runtime.jobs}")
    logger.info(f"Runs directory: {config.output.runs_dir}")
    logger.info("=" * 60)


# Singleton config instance
_config: Optional[AppConfig] = None


def get_config() -> AppConfig:
    """Gets the singleton config instance, loading if needed."""
    global _config
    if _config is None:
        _config = load_config()
    return _config


def reset_config() -> None:
    """Drops the cached config so the next get_config() re-reads the environment."""
    global _config
    _config = None
