"""Gyroscope traces and RK4 integration of dR/dt = [w]x R."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from ..core.errors import NonFiniteResult, OutOfRange, PreconditionError
from ..core.geometry import RotationMatrix, nearest_rotation, skew

logger = logging.getLogger(__name__)

MAX_ANGULAR_RATE = 100.0  # rad/s
DEFAULT_MAX_STEP_NS = 1_000_000


@dataclass(frozen=True, eq=False)
class GyroSample:
    t: int
    omega: np.ndarray

    def __post_init__(self) -> None:
        omega = np.array(self.omega, dtype=np.float64).reshape(-1)
        if omega.shape != (3,):
            raise PreconditionError("angular velocity must have 3 components")
        if not np.all(np.isfinite(omega)):
            raise PreconditionError(f"non-finite angular velocity at t={self.t}")
        if np.linalg.norm(omega) >= MAX_ANGULAR_RATE:
            raise PreconditionError(f"angular velocity {np.linalg.norm(omega):.1f} rad/s exceeds sanity bound")
        omega.setflags(write=False)
        object.__setattr__(self, "t", int(self.t))
        object.__setattr__(self, "omega", omega)


@dataclass(frozen=True, eq=False)
class GyroTrace:
    """Time-ordered samples stored column-wise: ``t`` (ns, int64) and ``omega`` (n, 3)."""
    t: np.ndarray
    omega: np.ndarray

    def __post_init__(self) -> None:
        t = np.array(self.t, dtype=np.int64).reshape(-1)
        omega = np.array(self.omega, dtype=np.float64).reshape(-1, 3)
        if len(t) < 2:
            raise PreconditionError("a gyro trace needs at least 2 samples")
        if len(t) != len(omega):
            raise PreconditionError("timestamp and sample counts differ")
        if np.any(np.diff(t) <= 0):
            raise PreconditionError("gyro timestamps must be strictly increasing")
        if not np.all(np.isfinite(omega)):
            raise PreconditionError("gyro trace has non-finite samples")
        if np.any(np.linalg.norm(omega, axis=1) >= MAX_ANGULAR_RATE):
            raise PreconditionError("gyro trace exceeds the angular-rate sanity bound")
        t.setflags(write=False)
        omega.setflags(write=False)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "omega", omega)

    @classmethod
    def from_samples(cls, samples: Sequence[GyroSample]) -> "GyroTrace":
        return cls(t=[s.t for s in samples], omega=[s.omega for s in samples])

    @property
    def samples(self) -> List[GyroSample]:
        return [GyroSample(int(t), w) for t, w in zip(self.t, self.omega)]

    @property
    def start(self) -> int:
        return int(self.t[0])

    @property
    def end(self) -> int:
        return int(self.t[-1])

    def __len__(self) -> int:
        return len(self.t)

    def native_interval(self) -> int:
        return int(np.median(np.diff(self.t)))

    def covers(self, t: float) -> bool:
        return self.start <= t <= self.end


@dataclass(frozen=True)
class FrameTiming:
    exposure_start: int
    exposure_end: int
    frame_id: Optional[int] = None

    def __post_init__(self) -> None:
        if int(self.exposure_end) <= int(self.exposure_start):
            raise PreconditionError(
                f"exposure end {self.exposure_end} is not after start {self.exposure_start}"
            )

    @property
    def midpoint(self) -> float:
        return (int(self.exposure_start) + int(self.exposure_end)) / 2.0

    @property
    def duration(self) -> int:
        return int(self.exposure_end) - int(self.exposure_start)


def default_step(trace: GyroTrace) -> int:
    return max(1, min(trace.native_interval(), DEFAULT_MAX_STEP_NS))


def _check_span(trace: GyroTrace, t: float) -> None:
    if not trace.covers(t):
        raise OutOfRange(f"t={t} ns outside gyro span [{trace.start}, {trace.end}]")


def omega_at(trace: GyroTrace, t: float) -> np.ndarray:
    """Angular velocity at ``t`` by linear interpolation between the bracketing samples."""
    _check_span(trace, t)
    return _interp(trace, t)


def _interp(trace: GyroTrace, t: float) -> np.ndarray:
    idx = int(np.searchsorted(trace.t, t, side="right")) - 1
    if idx >= len(trace) - 1:
        return trace.omega[-1].copy()
    t0 = trace.t[idx]
    if t == t0:
        return trace.omega[idx].copy()
    t1 = trace.t[idx + 1]
    w = (t - t0) / float(t1 - t0)
    return (1.0 - w) * trace.omega[idx] + w * trace.omega[idx + 1]


def integrate_rotation(
    trace: GyroTrace,
    t_from: float,
    t_to: float,
    step: Optional[int] = None,
) -> RotationMatrix:
    """RK4 solution of dR/dt = [w(t)]x R with R(t_from) = I, evaluated at ``t_to``.

    The interval is split into equal steps no longer than ``step`` ns. The
    result is projected onto SO(3) once, after the last step. ``t_to`` may
    precede ``t_from``; the integration then runs backwards in time.
    """
    _check_span(trace, t_from)
    _check_span(trace, t_to)
    step = default_step(trace) if step is None else step
    if step <= 0:
        raise PreconditionError("integration step must be positive")

    span = float(t_to) - float(t_from)
    if span == 0.0:
        return RotationMatrix.identity()
    n_steps = max(1, math.ceil(abs(span) / step))
    h_ns = span / n_steps
    h = h_ns * 1e-9
    lo, hi = float(trace.start), float(trace.end)

    def field(t: float, r: np.ndarray) -> np.ndarray:
        return skew(_interp(trace, min(max(t, lo), hi))) @ r

    r = np.eye(3)
    t = float(t_from)
    for _ in range(n_steps):
        k1 = field(t, r)
        k2 = field(t + h_ns / 2, r + (h / 2) * k1)
        k3 = field(t + h_ns / 2, r + (h / 2) * k2)
        k4 = field(t + h_ns, r + h * k3)
        r = r + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        t += h_ns
        if not np.all(np.isfinite(r)):
            raise NonFiniteResult(f"gyro integration diverged near t={t:.0f} ns")

    return RotationMatrix(nearest_rotation(r))


def interframe_rotations(
    trace: GyroTrace,
    timings: Sequence[FrameTiming],
    step: Optional[int] = None,
    time_offset_ns: int = 0,
) -> List[RotationMatrix]:
    """Rotation from frame 0's exposure midpoint to each frame's exposure midpoint.

    Consecutive midpoint-to-midpoint segments are integrated and chained, so
    each gyro interval is integrated once. ``time_offset_ns`` is added to the
    camera clock to express it on the gyro clock.
    """
    if not timings:
        return []
    mids = [timing.midpoint + time_offset_ns for timing in timings]
    for mid in mids:
        _check_span(trace, mid)

    rotations = [RotationMatrix.identity()]
    for prev, cur in zip(mids[:-1], mids[1:]):
        segment = integrate_rotation(trace, prev, cur, step)
        rotations.append(segment @ rotations[-1])
    logger.debug(
        f"Integrated {len(timings) - 1} inter-frame rotations; "
        f"last angle {rotations[-1].as_rotvec().round(6).tolist()} rad"
    )
    return rotations
