from __future__ import annotations

import logging
import shutil
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional, Union

from ..burst.burst_io import (
    CAMERA_FILE,
    GYRO_FILE,
    TIMING_FILE,
    frame_paths,
    read_camera_json,
    read_gyro_csv,
    read_timing_json,
)
from .errors import BurstError
from .image import read_image
from .settings import Settings

logger = logging.getLogger(__name__)


@dataclass
class ValidationResult:
    """Result of a validation check."""
    name: str
    status: str  # "pass", "warn", "fail"
    message: str
    details: Optional[str] = None


class SystemValidator:
    """Checks the runtime environment and, optionally, one burst directory."""

    def __init__(self, burst_dir: Optional[Union[str, Path]] = None):
        self.burst_dir = Path(burst_dir) if burst_dir is not None else None
        self.results: List[ValidationResult] = []

    def check_python_version(self) -> ValidationResult:
        version = sys.version_info
        label = f"Python {version.major}.{version.minor}.{version.micro}"
        if version >= (3, 9):
            return ValidationResult("Python Version", "pass", label)
        return ValidationResult("Python Version", "fail", f"{label} - requires 3.9+")

    def check_numerics(self) -> ValidationResult:
        """numpy, scipy and OpenCV are required; matplotlib and psutil are optional."""
        missing, optional_missing = [], []
        for module in ("numpy", "scipy", "cv2"):
            try:
                __import__(module)
            except ImportError:
                missing.append(module)
        for module in ("matplotlib", "psutil"):
            try:
                __import__(module)
            except ImportError:
                optional_missing.append(module)
        if missing:
            return ValidationResult("Numerics", "fail", f"Missing: {', '.join(missing)}",
                                    "Install with: pip install numpy scipy opencv-python-headless")
        if optional_missing:
            return ValidationResult("Numerics", "warn", f"Optional missing: {', '.join(optional_missing)}")
        return ValidationResult("Numerics", "pass", "numpy, scipy, OpenCV available")

    def check_output_dir(self) -> ValidationResult:
        settings = Settings.from_env()
        target = Path(settings.output_dir)
        existing = target if target.exists() else target.parent
        free_gb = shutil.disk_usage(existing if existing.exists() else Path(".")).free // (1024 ** 3)
        if free_gb < 1:
            return ValidationResult("Output Directory", "warn", f"{target}: {free_gb} GB free")
        return ValidationResult("Output Directory", "pass", f"{target}: {free_gb} GB free")

    def check_burst_frames(self) -> ValidationResult:
        paths = frame_paths(self.burst_dir)
        if not paths:
            return ValidationResult("Frames", "fail", f"no frame_*.png or frame_*.pgm in {self.burst_dir}")
        try:
            shapes = {read_image(p).shape for p in paths}
        except BurstError as e:
            return ValidationResult("Frames", "fail", str(e))
        if len(shapes) > 1:
            return ValidationResult("Frames", "fail", f"frames differ in size: {sorted(shapes)}")
        (shape,) = shapes
        return ValidationResult("Frames", "pass", f"{len(paths)} frames of {shape[1]}x{shape[0]}")

    def check_burst_metadata(self) -> ValidationResult:
        """Gyro CSV, timing JSON and camera JSON parse, and the gyro spans every exposure midpoint."""
        try:
            trace = read_gyro_csv(self.burst_dir / GYRO_FILE)
            timings = read_timing_json(self.burst_dir / TIMING_FILE)
            read_camera_json(self.burst_dir / CAMERA_FILE)
        except BurstError as e:
            return ValidationResult("Metadata", "fail", str(e))
        uncovered = [t.frame_id for t in timings if not trace.covers(t.midpoint)]
        if uncovered:
            return ValidationResult("Metadata", "fail", f"gyro trace does not cover frames {uncovered}")
        return ValidationResult(
            "Metadata", "pass",
            f"{len(trace)} gyro samples every {trace.native_interval() / 1e6:.2f} ms, {len(timings)} timings",
        )

    def run_all_checks(self) -> Dict[str, ValidationResult]:
        checks: List[Callable[[], ValidationResult]] = [
            self.check_python_version,
            self.check_numerics,
            self.check_output_dir,
        ]
        if self.burst_dir is not None:
            checks += [self.check_burst_frames, self.check_burst_metadata]

        results = {}
        for check in checks:
            result = check()
            results[result.name] = result
            self.results.append(result)
            logger.debug(f"{result.name}: {result.status} ({result.message})")
        return results

    @property
    def failed(self) -> bool:
        return any(r.status == "fail" for r in self.results)
