"""Burst directory layout and the small text formats around it.

A burst directory holds ``frame_%04d.png`` (or ``.pgm``), ``gyro.csv``,
``timing.json`` and ``camera.json``, plus an optional ``mask_%04d.pgm`` per
frame with partial validity; simulated bursts add ``truth.json`` and
``reference_clean.png``.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np

from ..core.data_formats import DataExporter, DataImporter
from ..core.errors import BurstError, InputFormatError
from ..core.geometry import CameraIntrinsics, Homography
from ..core.image import Image, read_image, read_mask, write_image, write_mask
from .features import CorrespondenceSet, DEFAULT_POINT_NOISE_SIGMA
from .gyro import FrameTiming, GyroTrace

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

GYRO_FILE = "gyro.csv"
TIMING_FILE = "timing.json"
CAMERA_FILE = "camera.json"
TRUTH_FILE = "truth.json"
CLEAN_REFERENCE_FILE = "reference_clean.png"
FRAME_PATTERN = "frame_{:04d}.png"
MASK_PATTERN = "mask_{:04d}.pgm"
GYRO_HEADER = ["t_ns", "omega_x", "omega_y", "omega_z"]
CORRESPONDENCE_HEADER = ["x", "y", "x_prime", "y_prime", "score"]


@dataclass
class Burst:
    """Frames, exposure metadata, gyro trace and intrinsics; optional ground truth."""
    frames: List[Image]
    timings: List[FrameTiming]
    trace: GyroTrace
    intrinsics: CameraIntrinsics
    true_homographies: Optional[List[Homography]] = None
    clean_reference: Optional[Image] = None
    noise_sigma: Optional[float] = None
    meta: Dict[str, Any] = field(default_factory=dict)

    @property
    def frame_size(self) -> tuple:
        return self.frames[0].width, self.frames[0].height

    @property
    def has_truth(self) -> bool:
        return self.true_homographies is not None


def _read_rows(path: Path, header: List[str]) -> List[tuple]:
    """(line number, fields) for each data row, after checking the header."""
    if not path.exists():
        raise InputFormatError(path, "file not found")
    rows = []
    with open(path, "r", newline="") as f:
        reader = csv.reader(f)
        try:
            first = next(reader)
        except StopIteration:
            raise InputFormatError(path, "empty file", 1)
        if [c.strip() for c in first] != header:
            raise InputFormatError(path, f"expected header {','.join(header)}", 1)
        for row in reader:
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise InputFormatError(path, f"expected {len(header)} fields, got {len(row)}", reader.line_num)
            rows.append((reader.line_num, row))
    return rows


def read_gyro_csv(path: PathLike) -> GyroTrace:
    path = Path(path)
    times, omegas = [], []
    for line, row in _read_rows(path, GYRO_HEADER):
        try:
            times.append(int(row[0]))
            omegas.append([float(v) for v in row[1:]])
        except ValueError as e:
            raise InputFormatError(path, f"malformed number ({e})", line) from e
    try:
        trace = GyroTrace(times, omegas)
    except BurstError as e:
        raise InputFormatError(path, str(e)) from e
    logger.debug(f"Read {len(trace)} gyro samples from {path}")
    return trace


def write_gyro_csv(trace: GyroTrace, path: PathLike) -> Path:
    rows = [
        {"t_ns": int(t), "omega_x": w[0], "omega_y": w[1], "omega_z": w[2]}
        for t, w in zip(trace.t, trace.omega)
    ]
    DataExporter.to_csv(rows, path, fieldnames=GYRO_HEADER)
    return Path(path)


def read_timing_json(path: PathLike) -> List[FrameTiming]:
    path = Path(path)
    data = DataImporter.from_json(path)
    if not isinstance(data, list):
        raise InputFormatError(path, "expected a JSON array of frame timings")
    timings = []
    for i, entry in enumerate(data):
        try:
            timings.append(FrameTiming(
                int(entry["exposure_start_ns"]),
                int(entry["exposure_end_ns"]),
                int(entry.get("frame_id", i)),
            ))
        except (KeyError, TypeError, ValueError, BurstError) as e:
            raise InputFormatError(path, f"entry {i}: {e}") from e
    timings.sort(key=lambda t: t.frame_id)
    return timings


def write_timing_json(timings: List[FrameTiming], path: PathLike) -> Path:
    data = [
        {
            "frame_id": t.frame_id if t.frame_id is not None else i,
            "exposure_start_ns": int(t.exposure_start),
            "exposure_end_ns": int(t.exposure_end),
        }
        for i, t in enumerate(timings)
    ]
    return DataExporter.to_json(data, path)


def read_camera_json(path: PathLike) -> CameraIntrinsics:
    path = Path(path)
    data = DataImporter.from_json(path)
    try:
        return CameraIntrinsics.from_dict(data)
    except (KeyError, TypeError, ValueError) as e:
        raise InputFormatError(path, f"invalid intrinsics ({e})") from e


def write_camera_json(k: CameraIntrinsics, path: PathLike) -> Path:
    return DataExporter.to_json(k.to_dict(), path)


def read_correspondences_csv(path: PathLike, point_noise_sigma: float = DEFAULT_POINT_NOISE_SIGMA) -> CorrespondenceSet:
    path = Path(path)
    x, xp, scores = [], [], []
    for line, row in _read_rows(path, CORRESPONDENCE_HEADER):
        try:
            values = [float(v) for v in row]
        except ValueError as e:
            raise InputFormatError(path, f"malformed number ({e})", line) from e
        if not 0.0 <= values[4] <= 1.0:
            raise InputFormatError(path, f"score {values[4]} outside [0, 1]", line)
        x.append(values[0:2])
        xp.append(values[2:4])
        scores.append(values[4])
    return CorrespondenceSet.from_arrays(np.array(x), np.array(xp), scores, point_noise_sigma)


def write_correspondences_csv(corr: CorrespondenceSet, path: PathLike) -> Optional[Path]:
    rows = [
        {"x": p.x[0], "y": p.x[1], "x_prime": p.x_prime[0], "y_prime": p.x_prime[1], "score": p.score}
        for p in corr.pairs
    ]
    return DataExporter.to_csv(rows, path, fieldnames=CORRESPONDENCE_HEADER)


def frame_paths(directory: Path) -> List[Path]:
    paths = sorted(directory.glob("frame_*.png")) + sorted(directory.glob("frame_*.pgm"))
    return sorted(paths, key=lambda p: p.stem)


def _mask_path(frame_path: Path) -> Path:
    return frame_path.with_name(frame_path.stem.replace("frame_", "mask_", 1) + ".pgm")


def _attach_mask(frame_path: Path, frame: Image) -> Image:
    mask_path = _mask_path(frame_path)
    if not mask_path.exists():
        return frame
    mask = read_mask(mask_path)
    if mask.shape != frame.shape:
        raise InputFormatError(mask_path, f"mask size {mask.shape} differs from frame size {frame.shape}")
    return frame.with_mask(mask)


def read_burst(directory: PathLike) -> Burst:
    directory = Path(directory)
    if not directory.is_dir():
        raise InputFormatError(directory, "not a directory")
    paths = frame_paths(directory)
    if not paths:
        raise InputFormatError(directory, "no frame_*.png or frame_*.pgm files")
    frames = [_attach_mask(p, read_image(p)) for p in paths]
    for p, frame in zip(paths, frames):
        if frame.shape != frames[0].shape:
            raise InputFormatError(p, f"frame size {frame.shape} differs from {frames[0].shape}")

    timings = read_timing_json(directory / TIMING_FILE)
    if len(timings) != len(frames):
        raise InputFormatError(directory / TIMING_FILE, f"{len(timings)} timings for {len(frames)} frames")
    trace = read_gyro_csv(directory / GYRO_FILE)
    intrinsics = read_camera_json(directory / CAMERA_FILE)

    burst = Burst(frames=frames, timings=timings, trace=trace, intrinsics=intrinsics)
    truth_path = directory / TRUTH_FILE
    if truth_path.exists():
        truth = DataImporter.from_json(truth_path)
        try:
            burst.true_homographies = [Homography.from_list(np.reshape(h, (3, 3))) for h in truth["homographies"]]
        except (KeyError, TypeError, ValueError, BurstError) as e:
            raise InputFormatError(truth_path, f"invalid homographies ({e})") from e
        if len(burst.true_homographies) != len(frames):
            raise InputFormatError(truth_path, "homography count does not match frame count")
        if truth.get("noise_sigma") is not None:
            burst.noise_sigma = float(truth["noise_sigma"])
        burst.meta = {k: v for k, v in truth.items() if k not in ("homographies", "intrinsics")}
    clean_path = directory / CLEAN_REFERENCE_FILE
    if clean_path.exists():
        burst.clean_reference = read_image(clean_path)
    logger.info(f"Loaded burst of {len(frames)} frames from {directory}")
    return burst


def write_burst(burst: Burst, directory: PathLike) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for i, frame in enumerate(burst.frames):
        write_image(frame, directory / FRAME_PATTERN.format(i))
        if frame.mask is not None and not frame.mask.all():
            write_mask(frame.mask, directory / MASK_PATTERN.format(i))
    write_gyro_csv(burst.trace, directory / GYRO_FILE)
    write_timing_json(burst.timings, directory / TIMING_FILE)
    write_camera_json(burst.intrinsics, directory / CAMERA_FILE)
    if burst.true_homographies is not None:
        DataExporter.to_json(
            {
                "homographies": [h.h.reshape(-1) for h in burst.true_homographies],
                "intrinsics": burst.intrinsics.to_dict(),
                "noise_sigma": burst.noise_sigma,
                **burst.meta,
            },
            directory / TRUTH_FILE,
        )
    if burst.clean_reference is not None:
        write_image(burst.clean_reference, directory / CLEAN_REFERENCE_FILE)
    logger.info(f"Wrote burst of {len(burst.frames)} frames to {directory}")
    return directory
