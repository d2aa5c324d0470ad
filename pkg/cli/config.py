from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

from dotenv import load_dotenv


BASE_DIR = Path(__file__).resolve().parent.parent
ENV_PATH = BASE_DIR / ".env"


@dataclass
class RuntimeConfig:
    """Machine settings; physics never comes from the environment."""

    threads: int = 1
    log_level: str = "INFO"
    output_dir: str = "runs"


def get_runtime_config() -> RuntimeConfig:
    """Load runtime settings from the environment and an optional ``.env``."""
    if ENV_PATH.exists():
        load_dotenv(ENV_PATH)
    else:
        load_dotenv()

    return RuntimeConfig(
        threads=max(1, int(os.getenv("BOHM_THREADS", "1"))),
        log_level=os.getenv("BOHM_LOG_LEVEL", "INFO").upper(),
        output_dir=os.getenv("BOHM_OUTPUT_DIR", "runs"),
    )


__all__ = ["RuntimeConfig", "get_runtime_config"]
