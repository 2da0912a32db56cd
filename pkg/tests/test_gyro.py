from __future__ import annotations

import numpy as np
import pytest

from gyroburst.burst.gyro import (
    FrameTiming,
    GyroSample,
    GyroTrace,
    default_step,
    integrate_rotation,
    interframe_rotations,
    omega_at,
)
from gyroburst.core.errors import OutOfRange, PreconditionError
from gyroburst.core.geometry import RotationMatrix, rot_z


def constant_trace(omega, end_ns: int = 100_000_000, interval_ns: int = 5_000_000) -> GyroTrace:
    t = np.arange(0, end_ns + 1, interval_ns)
    return GyroTrace(t, np.tile(np.asarray(omega, dtype=float), (len(t), 1)))


def test_trace_validation():
    with pytest.raises(PreconditionError):
        GyroTrace([0], [[0.0, 0.0, 0.0]])
    with pytest.raises(PreconditionError):
        GyroTrace([0, 10, 10], np.zeros((3, 3)))
    with pytest.raises(PreconditionError):
        GyroTrace([0, 10], [[0.0, 0.0, 0.0], [0.0, 0.0, np.nan]])
    with pytest.raises(PreconditionError):
        GyroTrace([0, 10], [[0.0, 0.0, 0.0], [0.0, 100.0, 0.0]])
    with pytest.raises(PreconditionError):
        GyroSample(0, [1.0, 2.0])


def test_frame_timing_requires_positive_exposure():
    with pytest.raises(PreconditionError):
        FrameTiming(100, 100)
    timing = FrameTiming(100, 300, 0)
    assert timing.midpoint == 200.0
    assert timing.duration == 200


def test_omega_interpolates_between_samples():
    trace = GyroTrace([0, 1000], [[0.0, 0.0, 0.0], [1.0, -2.0, 4.0]])
    assert np.allclose(omega_at(trace, 250), [0.25, -0.5, 1.0])
    assert np.allclose(omega_at(trace, 1000), [1.0, -2.0, 4.0])
    with pytest.raises(OutOfRange):
        omega_at(trace, 1001)


def test_default_step_is_capped():
    assert default_step(constant_trace([0, 0, 1], interval_ns=5_000_000)) == 1_000_000
    assert default_step(constant_trace([0, 0, 1], interval_ns=250_000)) == 250_000


def test_constant_rate_matches_closed_form():
    trace = constant_trace([0.0, 0.0, 2.0])
    r = integrate_rotation(trace, 10_000_000, 60_000_000)
    assert r.angle_to(rot_z(0.1)) < 1e-9


def test_backward_integration_inverts_forward():
    t = np.arange(0, 100_000_001, 5_000_000)
    omega = np.column_stack([np.sin(t * 1e-8), np.cos(t * 2e-8), 0.5 * np.ones(len(t))])
    trace = GyroTrace(t, omega)
    forward = integrate_rotation(trace, 12_000_000, 87_000_000)
    backward = integrate_rotation(trace, 87_000_000, 12_000_000)
    assert (backward @ forward).angle_to(RotationMatrix.identity()) < 1e-9


def test_integration_outside_trace_fails():
    trace = constant_trace([0.0, 0.0, 1.0])
    with pytest.raises(OutOfRange):
        integrate_rotation(trace, 0, 100_000_001)
    with pytest.raises(PreconditionError):
        integrate_rotation(trace, 0, 10, step=0)


def test_rk4_error_shrinks_with_fourth_order():
    trace = constant_trace([0.0, 0.0, 10.0])
    truth = rot_z(1.0)
    coarse = integrate_rotation(trace, 0, 100_000_000, step=50_000_000).angle_to(truth)
    fine = integrate_rotation(trace, 0, 100_000_000, step=25_000_000).angle_to(truth)
    assert coarse > 1e-6
    assert fine < coarse / 8.0


def test_interframe_rotations_chain_from_first_frame():
    trace = constant_trace([0.0, 0.0, 1.5])
    timings = [FrameTiming(5_000_000 + i * 30_000_000, 15_000_000 + i * 30_000_000, i) for i in range(3)]
    rotations = interframe_rotations(trace, timings)
    assert len(rotations) == 3
    assert rotations[0].angle_to(RotationMatrix.identity()) == 0.0
    assert rotations[1].angle_to(rot_z(1.5 * 0.03)) < 1e-9
    assert rotations[2].angle_to(rot_z(1.5 * 0.06)) < 1e-9
    assert interframe_rotations(trace, []) == []


def test_interframe_rotations_apply_clock_offset():
    trace = constant_trace([0.0, 0.0, 1.0])
    timings = [FrameTiming(80_000_000, 90_000_000, 0), FrameTiming(90_000_000, 98_000_000, 1)]
    with pytest.raises(OutOfRange):
        interframe_rotations(trace, timings, time_offset_ns=20_000_000)


def test_quarter_turn_over_one_second():
    trace = constant_trace([0.0, 0.0, np.pi / 2], end_ns=1_000_000_000, interval_ns=1_000_000)
    r = integrate_rotation(trace, 0, 1_000_000_000, step=1_000_000)
    assert np.linalg.norm(r.m - rot_z(np.pi / 2).m) < 1e-8


def test_integration_composes_over_interior_instant():
    t = np.arange(0, 100_000_001, 5_000_000)
    omega = np.column_stack([0.3 * np.sin(t * 5e-8), -0.2 * np.ones(len(t)), 0.4 * np.cos(t * 3e-8)])
    trace = GyroTrace(t, omega)
    whole = integrate_rotation(trace, 10_000_000, 85_000_000, step=1_000_000)
    first = integrate_rotation(trace, 10_000_000, 45_000_000, step=1_000_000)
    second = integrate_rotation(trace, 45_000_000, 85_000_000, step=1_000_000)
    assert np.linalg.norm(whole.m - (second @ first).m) < 1e-7
