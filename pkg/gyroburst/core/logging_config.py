"""Logging setup shared by the CLI, the API server and library callers."""
from __future__ import annotations

import logging
import logging.handlers
from pathlib import Path
from typing import Optional

from rich.console import Console
from rich.logging import RichHandler

FILE_FORMAT = "%(asctime)s | %(levelname)-8s | %(name)s.%(funcName)s:%(lineno)d | %(message)s"
QUIET_LOGGERS = ("matplotlib", "PIL", "httpx")


def _level(name: str) -> int:
    level = logging.getLevelName(name.upper())
    if not isinstance(level, int):
        raise ValueError(f"unknown log level {name!r}")
    return level


def setup_logging(
    level: str = "INFO",
    log_file: Optional[str] = None,
    console: bool = True,
    max_bytes: int = 10 * 1024 * 1024,
    backups: int = 3,
) -> None:
    """Replace the root handlers with a rich stderr handler and an optional rotating file.

    The file always records DEBUG so a run can be replayed frame by frame even
    when the console is at INFO.
    """
    root = logging.getLogger()
    root.handlers.clear()
    console_level = _level(level)
    root.setLevel(logging.DEBUG if log_file else console_level)

    if console:
        handler = RichHandler(
            console=Console(stderr=True),
            level=console_level,
            show_path=False,
            markup=False,
            log_time_format="[%X]",
        )
        root.addHandler(handler)

    if log_file:
        path = Path(log_file)
        path.parent.mkdir(parents=True, exist_ok=True)
        file_handler = logging.handlers.RotatingFileHandler(path, maxBytes=max_bytes, backupCount=backups)
        file_handler.setLevel(logging.DEBUG)
        file_handler.setFormatter(logging.Formatter(FILE_FORMAT))
        root.addHandler(file_handler)

    for name in QUIET_LOGGERS:
        logging.getLogger(name).setLevel(logging.WARNING)
