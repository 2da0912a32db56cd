"""Synthetic ground-truth bursts of a textured plane under known camera motion."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy import ndimage

from ..core.errors import DimensionMismatch, ExcursionTooLarge, OutOfRange, PreconditionError
from ..core.geometry import CameraIntrinsics, Homography, RotationMatrix, project_points
from ..core.image import Image
from .burst_io import Burst
from .gyro import FrameTiming, GyroTrace
from .merge import warp_frame

logger = logging.getLogger(__name__)

PSNR_CAP_DB = 99.0
PRESETS = ("offset", "inplane", "xaxis", "static")
DEFAULT_FOCAL = 300.0
DEFAULT_MARGIN = 64


@dataclass(frozen=True)
class Keyframe:
    t: int
    rotation: RotationMatrix
    translation: Tuple[float, float, float] = (0.0, 0.0, 0.0)


@dataclass(frozen=True)
class Trajectory:
    """Camera poses X_c = R X_w + T, slerped in rotation and linear in translation between keyframes."""
    keyframes: Tuple[Keyframe, ...]

    def __post_init__(self) -> None:
        keyframes = tuple(self.keyframes)
        if len(keyframes) < 1:
            raise PreconditionError("a trajectory needs at least one keyframe")
        times = [k.t for k in keyframes]
        if any(b <= a for a, b in zip(times[:-1], times[1:])):
            raise PreconditionError("keyframe timestamps must be strictly increasing")
        object.__setattr__(self, "keyframes", keyframes)

    @property
    def start(self) -> int:
        return self.keyframes[0].t

    @property
    def end(self) -> int:
        return self.keyframes[-1].t

    def _segment(self, t: float) -> int:
        if not self.start <= t <= self.end:
            raise OutOfRange(f"t={t} outside trajectory [{self.start}, {self.end}]")
        times = [k.t for k in self.keyframes]
        idx = int(np.searchsorted(times, t, side="right")) - 1
        return min(max(idx, 0), len(self.keyframes) - 2)

    def pose(self, t: float) -> Tuple[RotationMatrix, np.ndarray]:
        if len(self.keyframes) == 1:
            if t != self.start:
                raise OutOfRange(f"t={t} outside single-keyframe trajectory")
            k = self.keyframes[0]
            return k.rotation, np.asarray(k.translation, dtype=np.float64)
        i = self._segment(t)
        a, b = self.keyframes[i], self.keyframes[i + 1]
        s = (t - a.t) / float(b.t - a.t)
        psi = (a.rotation.T @ b.rotation).as_rotvec()
        rotation = a.rotation @ RotationMatrix.from_rotvec(s * psi)
        translation = (1.0 - s) * np.asarray(a.translation) + s * np.asarray(b.translation)
        return rotation, translation

    def angular_velocity(self, t: float) -> np.ndarray:
        """w with dR/dt = [w]x R; constant on each keyframe segment."""
        if len(self.keyframes) == 1:
            return np.zeros(3)
        i = self._segment(t)
        a, b = self.keyframes[i], self.keyframes[i + 1]
        psi = (a.rotation.T @ b.rotation).as_rotvec()
        return a.rotation.m @ psi / ((b.t - a.t) * 1e-9)


class SensorModel(BaseModel):
    model_config = ConfigDict(frozen=True)

    gyro_rate: float = Field(200.0, gt=0.0)
    gyro_noise_sigma: float = Field(0.001, ge=0.0)
    gyro_bias: Tuple[float, float, float] = (0.002, 0.002, 0.002)
    frame_rate: float = Field(30.0, gt=0.0)
    exposure: int = Field(10_000_000, gt=0)
    image_noise_sigma: float = Field(0.02, ge=0.0)

    @model_validator(mode="after")
    def _exposure_fits(self) -> "SensorModel":
        if self.exposure >= self.frame_interval:
            raise ValueError(f"exposure {self.exposure} ns does not fit the frame interval {self.frame_interval} ns")
        return self

    @property
    def frame_interval(self) -> int:
        return int(round(1e9 / self.frame_rate))

    @property
    def gyro_interval(self) -> int:
        return int(round(1e9 / self.gyro_rate))


@dataclass
class GroundTruthBurst:
    frames: List[Image]
    timings: List[FrameTiming]
    trace: GyroTrace
    true_homographies: List[Homography]
    intrinsics: CameraIntrinsics
    clean_reference: Image
    noise_sigma: float = 0.0
    seed: int = 0
    preset: Optional[str] = None
    meta: Dict[str, object] = field(default_factory=dict)

    def __post_init__(self) -> None:
        n = len(self.frames)
        if not (len(self.timings) == n == len(self.true_homographies)):
            raise PreconditionError("frame, timing and homography counts differ")

    def to_burst(self) -> Burst:
        return Burst(
            frames=list(self.frames),
            timings=list(self.timings),
            trace=self.trace,
            intrinsics=self.intrinsics,
            true_homographies=list(self.true_homographies),
            clean_reference=self.clean_reference,
            noise_sigma=self.noise_sigma,
            meta={"seed": self.seed, "preset": self.preset, **self.meta},
        )


def make_scene(width: int, height: int, rng_seed: int = 0) -> Image:
    """Blurred random rectangles over a smooth gradient; plenty of corners."""
    rng = np.random.default_rng(rng_seed)
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    data = 0.35 + 0.15 * (xx / max(width - 1, 1)) + 0.1 * (yy / max(height - 1, 1))
    n_rects = max(8, width * height // 300)
    for _ in range(n_rects):
        w, h = rng.integers(4, 25, size=2)
        x0 = int(rng.integers(0, max(width - w, 1)))
        y0 = int(rng.integers(0, max(height - h, 1)))
        data[y0:y0 + h, x0:x0 + w] = rng.uniform(0.1, 0.9)
    data = ndimage.gaussian_filter(data, 1.0)
    return Image(np.clip(data, 0.0, 1.0))


def burst_timings(n_frames: int, sensor: SensorModel) -> Tuple[List[FrameTiming], int]:
    """Exposure windows for ``n_frames`` and the end of the gyro record covering them."""
    if n_frames < 1:
        raise PreconditionError("a burst needs at least one frame")
    t0 = sensor.gyro_interval
    timings = [
        FrameTiming(t0 + i * sensor.frame_interval, t0 + i * sensor.frame_interval + sensor.exposure, i)
        for i in range(n_frames)
    ]
    end = timings[-1].exposure_end + sensor.gyro_interval
    n_samples = math.ceil(end / sensor.gyro_interval)
    return timings, n_samples * sensor.gyro_interval


def preset_trajectory(
    name: str,
    n_frames: int,
    sensor: SensorModel,
    focal: float = DEFAULT_FOCAL,
    plane_depth: float = 1.0,
) -> Trajectory:
    """Constant-rate motions: ``offset`` (small pan/tilt plus sideways drift),
    ``inplane`` (roll), ``xaxis`` (tilt about the x-axis) and ``static``."""
    if name not in PRESETS:
        raise PreconditionError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    _, end = burst_timings(n_frames, sensor)
    frames_per_ns = sensor.frame_rate * 1e-9
    velocity = np.zeros(3)
    if name == "offset":
        per_frame = np.array([0.5, 0.8, 0.0]) / focal
        velocity = np.array([0.3, -0.2, 0.0]) * plane_depth / focal
    elif name == "inplane":
        per_frame = np.array([0.0, 0.0, math.radians(0.25)])
    elif name == "xaxis":
        per_frame = np.array([math.radians(0.5), 0.0, 0.0])
    else:
        per_frame = np.zeros(3)

    frames_total = end * frames_per_ns
    return Trajectory((
        Keyframe(0, RotationMatrix.identity(), (0.0, 0.0, 0.0)),
        Keyframe(end, RotationMatrix.from_rotvec(per_frame * frames_total), tuple(velocity * frames_total)),
    ))


def plane_homography(rotation: RotationMatrix, translation: np.ndarray, k: CameraIntrinsics,
                     plane_depth: float) -> np.ndarray:
    """Pixels of the identity camera on the plane Z = d mapped into the camera at (R, T)."""
    n = np.array([0.0, 0.0, 1.0])
    return k.matrix @ (rotation.m + np.outer(translation, n) / plane_depth) @ k.inverse


def render_burst(
    scene: Image,
    traj: Trajectory,
    sensor: SensorModel,
    k: CameraIntrinsics,
    plane_depth: float,
    rng_seed: int,
    n_frames: int,
    margin: int = DEFAULT_MARGIN,
) -> GroundTruthBurst:
    """Render ``n_frames`` noisy views of ``scene`` and the matching gyro trace.

    The scene is the image of the plane seen by the identity camera, framed
    with ``margin`` pixels on every side; frames are ``scene`` minus the
    margins. A seed sequence spawns one generator per frame plus one for the
    gyro, so each frame's noise is independent of rendering order.
    """
    width = scene.width - 2 * margin
    height = scene.height - 2 * margin
    if width < 32 or height < 32:
        raise PreconditionError("scene too small for the requested margin")
    timings, end = burst_timings(n_frames, sensor)
    if traj.start > 0 or traj.end < end:
        raise OutOfRange("trajectory does not cover the burst")

    streams = np.random.SeedSequence(rng_seed).spawn(n_frames + 1)
    offset = Homography.translation(margin, margin)
    corners = np.array([[0, 0], [width - 1, 0], [0, height - 1], [width - 1, height - 1]], dtype=np.float64)

    frames: List[Image] = []
    world_to_frame: List[np.ndarray] = []
    clean_reference: Optional[Image] = None
    for i, timing in enumerate(timings):
        rotation, translation = traj.pose(timing.midpoint)
        h_wi = plane_homography(rotation, translation, k, plane_depth)
        world_to_frame.append(h_wi)
        # frame pixel -> scene pixel
        to_scene = offset @ Homography(np.linalg.inv(h_wi))
        reach = project_points(to_scene, corners)
        if (reach.min() < 0 or reach[:, 0].max() > scene.width - 1 or reach[:, 1].max() > scene.height - 1):
            raise ExcursionTooLarge(f"frame {i} leaves the scene (corners reach {reach.round(1).tolist()})")
        clean = warp_frame(scene, to_scene).data[:height, :width]
        if i == 0:
            clean_reference = Image(clean)
        rng = np.random.default_rng(streams[i])
        noisy = clean + rng.normal(0.0, sensor.image_noise_sigma, clean.shape) if sensor.image_noise_sigma > 0 else clean
        frames.append(Image(np.clip(noisy, 0.0, 1.0)))

    h0_inv = np.linalg.inv(world_to_frame[0])
    true_h = [Homography.identity()]
    for h_wi in world_to_frame[1:]:
        rel = h_wi @ h0_inv
        true_h.append(Homography(rel / rel[2, 2]))

    gyro_rng = np.random.default_rng(streams[-1])
    times = np.arange(0, end + 1, sensor.gyro_interval, dtype=np.int64)
    omega = np.array([traj.angular_velocity(float(t)) for t in times])
    omega = omega + np.asarray(sensor.gyro_bias)
    if sensor.gyro_noise_sigma > 0:
        omega = omega + gyro_rng.normal(0.0, sensor.gyro_noise_sigma, omega.shape)

    logger.info(f"Rendered {n_frames} frames of {width}x{height} (seed {rng_seed})")
    return GroundTruthBurst(
        frames=frames,
        timings=timings,
        trace=GyroTrace(times, omega),
        true_homographies=true_h,
        intrinsics=k,
        clean_reference=clean_reference,
        noise_sigma=sensor.image_noise_sigma,
        seed=rng_seed,
    )


def simulate_burst(
    preset: str = "offset",
    n_frames: int = 16,
    seed: int = 0,
    sensor: Optional[SensorModel] = None,
    width: int = 256,
    height: int = 256,
    focal: float = DEFAULT_FOCAL,
    margin: int = DEFAULT_MARGIN,
    plane_depth: float = 1.0,
) -> GroundTruthBurst:
    """Scene, preset trajectory and rendering in one call."""
    sensor = sensor or SensorModel()
    k = CameraIntrinsics.centered(width, height, focal)
    scene = make_scene(width + 2 * margin, height + 2 * margin, seed)
    traj = preset_trajectory(preset, n_frames, sensor, focal, plane_depth)
    burst = render_burst(scene, traj, sensor, k, plane_depth, seed, n_frames, margin)
    burst.preset = preset
    return burst


def psnr(test: Image, truth: Image) -> float:
    """10 log10(1 / MSE) for unit peak; identical images give the 99 dB cap."""
    if test.shape != truth.shape:
        raise DimensionMismatch(f"{test.shape} != {truth.shape}")
    mse = float(np.mean((test.data - truth.data) ** 2))
    if mse <= 0.0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 10.0 * math.log10(1.0 / mse))


def homography_error(estimate: Homography, truth: Homography, frame_size: Sequence[int]) -> float:
    """Mean distance between the two mappings at the frame corners and center."""
    width, height = int(frame_size[0]), int(frame_size[1])
    points = np.array([
        [0.0, 0.0],
        [width - 1.0, 0.0],
        [0.0, height - 1.0],
        [width - 1.0, height - 1.0],
        [(width - 1) / 2.0, (height - 1) / 2.0],
    ])
    a = project_points(estimate.normalized(), points)
    b = project_points(truth.normalized(), points)
    return float(np.mean(np.linalg.norm(a - b, axis=1)))
