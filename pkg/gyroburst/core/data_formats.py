"""JSON and CSV files for reports, metrics and burst metadata.

Reports carry numpy values and infinite steady errors; both are reduced to
plain JSON here (``inf`` becomes the string ``"inf"``) so that files stay
strict JSON and readable by other tools.
"""
from __future__ import annotations

import csv
import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np

from .errors import InputFormatError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
NON_FINITE = {"inf": math.inf, "-inf": -math.inf, "nan": math.nan}


def to_plain(obj: Any) -> Any:
    """Recursively convert numpy types, paths and ``to_dict`` objects to JSON values."""
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        if math.isfinite(value):
            return value
        return "nan" if math.isnan(value) else ("inf" if value > 0 else "-inf")
    if obj is None or isinstance(obj, str):
        return obj
    if isinstance(obj, Path):
        return str(obj)
    if isinstance(obj, np.ndarray):
        return to_plain(obj.tolist())
    if isinstance(obj, dict):
        return {str(k): to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_plain(v) for v in obj]
    if hasattr(obj, "to_dict"):
        return to_plain(obj.to_dict())
    return str(obj)


def _restore(obj: Any) -> Any:
    if isinstance(obj, str) and obj in NON_FINITE:
        return NON_FINITE[obj]
    if isinstance(obj, dict):
        return {k: _restore(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_restore(v) for v in obj]
    return obj


class DataExporter:

    @staticmethod
    def to_json(data: Any, path: PathLike, indent: int = 2) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as f:
            json.dump(to_plain(data), f, indent=indent, allow_nan=False)
        logger.debug(f"Wrote {path}")
        return path

    @staticmethod
    def to_csv(rows: Sequence[Dict[str, Any]], path: PathLike, fieldnames: Optional[List[str]] = None) -> Optional[Path]:
        """Header plus one line per row; floats keep full precision. Nothing is written for no rows."""
        if not rows:
            logger.warning(f"No rows to write to {path}")
            return None
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=fieldnames or list(rows[0]))
            writer.writeheader()
            writer.writerows(to_plain(dict(row)) for row in rows)
        logger.debug(f"Wrote {len(rows)} rows to {path}")
        return path


class DataImporter:

    @staticmethod
    def from_json(path: PathLike, restore_non_finite: bool = False) -> Any:
        """Parse a JSON file; syntax errors become InputFormatError with the line number.

        With ``restore_non_finite`` the strings ``"inf"``, ``"-inf"`` and
        ``"nan"`` are turned back into floats.
        """
        path = Path(path)
        if not path.exists():
            raise InputFormatError(path, "file not found")
        try:
            with open(path, "r") as f:
                data = json.load(f)
        except json.JSONDecodeError as e:
            raise InputFormatError(path, e.msg, e.lineno) from e
        return _restore(data) if restore_non_finite else data
