"""Value types and shared utilities for gyroburst."""

from .errors import BurstError, InputFormatError, PreconditionError
from .geometry import CameraIntrinsics, Homography, RotationMatrix
from .image import Image, read_image, write_image
from .settings import Settings
from .storage import RunRecord, save_run, load_run, list_runs
from .logging_config import setup_logging
from .monitoring import PerformanceTracker, StageTimings, performance_monitor
from .data_formats import DataExporter, DataImporter

__all__ = [
    "BurstError",
    "InputFormatError",
    "PreconditionError",
    "CameraIntrinsics",
    "Homography",
    "RotationMatrix",
    "Image",
    "read_image",
    "write_image",
    "Settings",
    "RunRecord",
    "save_run",
    "load_run",
    "list_runs",
    "setup_logging",
    "PerformanceTracker",
    "StageTimings",
    "performance_monitor",
    "DataExporter",
    "DataImporter",
]
