from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Optional

from dotenv import load_dotenv

from .logging_config import setup_logging

# Load .env if present
load_dotenv(override=False)

ENV_PREFIX = "GYROBURST_"
TRUTHY = ("1", "true", "yes", "on")
DEFAULT_DB = "gyroburst_runs.sqlite3"


def _env(name: str, default: Optional[str] = None) -> Optional[str]:
    value = os.environ.get(ENV_PREFIX + name)
    if value is None or not value.strip():
        return default
    return value.strip()


@dataclass
class Settings:
    """Process-level settings, loaded from the environment."""
    verbose: bool = False
    log_file: Optional[str] = None
    db_path: str = DEFAULT_DB
    workers: int = 1
    output_dir: str = "gyroburst_out"

    def setup_logging(self) -> None:
        """Set up logging based on verbose flag."""
        setup_logging(
            level="DEBUG" if self.verbose else "INFO",
            log_file=self.log_file,
        )

    @classmethod
    def from_env(cls) -> "Settings":
        try:
            workers = int(_env("WORKERS", "1") or 1)
        except ValueError:
            workers = 1
        return cls(
            verbose=(_env("VERBOSE", "0") or "0").lower() in TRUTHY,
            log_file=_env("LOG_FILE"),
            db_path=_env("DB", DEFAULT_DB) or DEFAULT_DB,
            workers=max(1, workers),
            output_dir=_env("OUTPUT", "gyroburst_out") or "gyroburst_out",
        )

    @classmethod
    def load(cls) -> "Settings":
        """Load and return the settings instance."""
        settings = cls.from_env()
        settings.setup_logging()
        return settings
