"""Configuration loading for the experiment runner."""

from dataclasses import dataclass
import logging
import os
from pathlib import Path

LOGGER = logging.getLogger(__name__)

DEFAULT_OUT_DIR = "flexdm-out"
DEFAULT_JOB_CAP = 1_000_000
EXECUTORS = ("process", "thread")


@dataclass
class Settings:
    """Runtime configuration loaded from environment or files."""
    threads: int | None = None
    out_dir: Path = Path(DEFAULT_OUT_DIR)
    job_cap: int = DEFAULT_JOB_CAP
    executor: str = "process"
    job_timeout: float | None = None
    log_level: str = "WARNING"


def _load_dotenv_into_environment(dotenv_path: Path) -> None:
    """Load simple KEY=VALUE pairs from .env if variables are not already set."""
    if not dotenv_path.is_file():
        return

    try:
        lines = dotenv_path.read_text(encoding="utf-8").splitlines()
    except OSError:
        return

    for raw_line in lines:
        line = raw_line.strip()
        if not line or line.startswith("#") or "=" not in line:
            continue

        key, value = line.split("=", 1)
        key = key.strip()
        if not key or key in os.environ:
            continue

        cleaned = value.strip()
        if len(cleaned) >= 2 and cleaned[0] == cleaned[-1] and cleaned[0] in {'"', "'"}:
            cleaned = cleaned[1:-1]

        os.environ[key] = cleaned


def _optional_str_env(name: str) -> str | None:
    raw = os.getenv(name)
    if raw is None:
        return None
    normalized = raw.strip()
    if not normalized:
        return None
    return normalized


def _positive_int_env(name: str) -> int | None:
    raw = _optional_str_env(name)
    if raw is None:
        return None
    try:
        value = int(raw)
    except ValueError:
        LOGGER.warning("Ignoring %s=%r: expected a positive integer", name, raw)
        return None
    if value < 1:
        LOGGER.warning("Ignoring %s=%r: expected a positive integer", name, raw)
        return None
    return value


def _positive_float_env(name: str) -> float | None:
    raw = _optional_str_env(name)
    if raw is None:
        return None
    try:
        value = float(raw)
    except ValueError:
        LOGGER.warning("Ignoring %s=%r: expected a positive number of seconds", name, raw)
        return None
    if value <= 0:
        LOGGER.warning("Ignoring %s=%r: expected a positive number of seconds", name, raw)
        return None
    return value


def load_settings() -> Settings:
    """Load settings from environment or config files."""
    _load_dotenv_into_environment(Path.cwd() / ".env")

    executor = (_optional_str_env("FLEXDM_EXECUTOR") or "process").lower()
    if executor not in EXECUTORS:
        LOGGER.warning("Ignoring FLEXDM_EXECUTOR=%r: expected one of %s", executor, EXECUTORS)
        executor = "process"

    log_level = (_optional_str_env("FLEXDM_LOG_LEVEL") or "WARNING").upper()
    if not isinstance(logging.getLevelName(log_level), int):
        log_level = "WARNING"

    return Settings(
        threads=_positive_int_env("FLEXDM_THREADS"),
        out_dir=Path(_optional_str_env("FLEXDM_OUT_DIR") or DEFAULT_OUT_DIR),
        job_cap=_positive_int_env("FLEXDM_JOB_CAP") or DEFAULT_JOB_CAP,
        executor=executor,
        job_timeout=_positive_float_env("FLEXDM_JOB_TIMEOUT"),
        log_level=log_level,
    )
