from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

from dotenv import load_dotenv

# Load environment variables from .env file if it exists
env_file = Path(__file__).parent.parent.parent / ".env"
if env_file.exists():
    load_dotenv(env_file)


def _env_int(key: str, default: str) -> int:
    raw = os.getenv(key, default)
    try:
        return int(str(raw).strip())
    except Exception:
        return int(default)


def _env_float(key: str, default: str) -> float:
    raw = os.getenv(key, default)
    try:
        return float(str(raw).strip())
    except Exception:
        return float(default)


@dataclass(frozen=True, slots=True)
class Settings:
    # Files/dirs (relative to repo root unless absolute)
    config_file: str = field(default_factory=lambda: os.getenv("WIFI_DISTANCE_CONFIG", "config/pipeline.yaml"))
    output_dir: str = field(default_factory=lambda: os.getenv("WIFI_DISTANCE_OUTPUT_DIR", "runs"))

    log_level: str = field(default_factory=lambda: (os.getenv("LOG_LEVEL", "INFO") or "INFO").strip().upper())

    # Thread pool size for pair extraction, GA fitness and random search draws.
    workers: int = field(default_factory=lambda: max(1, _env_int("WIFI_DISTANCE_WORKERS", "1")))

    # Artifact writes hold a portalocker lock on <file>.lock for at most this long.
    lock_timeout_s: float = field(default_factory=lambda: _env_float("ARTIFACT_LOCK_TIMEOUT_S", "30"))


def repo_root() -> Path:
    # .../repo_root/wifi_distance/core/settings.py -> parents[2] == repo_root
    return Path(__file__).resolve().parents[2]


def resolve_path(p: str) -> Path:
    path = Path(p)
    if path.is_absolute():
        return path
    return (repo_root() / path).resolve()
