from __future__ import annotations

import numpy as np
import pytest

from gyroburst.burst.gyro import interframe_rotations
from gyroburst.burst.merge import warp_frame
from gyroburst.burst.simulation import (
    PSNR_CAP_DB,
    Keyframe,
    SensorModel,
    Trajectory,
    burst_timings,
    homography_error,
    make_scene,
    preset_trajectory,
    psnr,
    render_burst,
    simulate_burst,
)
from gyroburst.core.errors import ExcursionTooLarge, OutOfRange, PreconditionError
from gyroburst.core.geometry import CameraIntrinsics, Homography, RotationMatrix, rot_y
from gyroburst.core.image import Image

CLEAN_SENSOR = SensorModel(gyro_noise_sigma=0.0, gyro_bias=(0.0, 0.0, 0.0), image_noise_sigma=0.0)


def test_scene_is_deterministic_and_in_range():
    a = make_scene(96, 80, rng_seed=4)
    b = make_scene(96, 80, rng_seed=4)
    assert a.shape == (80, 96)
    assert np.array_equal(a.data, b.data)
    assert 0.0 <= a.data.min() and a.data.max() <= 1.0
    assert not np.array_equal(a.data, make_scene(96, 80, rng_seed=5).data)


def test_sensor_exposure_must_fit_frame_interval():
    with pytest.raises(ValueError):
        SensorModel(frame_rate=100.0, exposure=20_000_000)


def test_burst_timings_follow_frame_rate():
    sensor = SensorModel()
    timings, end = burst_timings(4, sensor)
    starts = [t.exposure_start for t in timings]
    assert np.all(np.diff(starts) == sensor.frame_interval)
    assert all(t.duration == sensor.exposure for t in timings)
    assert end >= timings[-1].exposure_end + sensor.gyro_interval
    assert end % sensor.gyro_interval == 0
    with pytest.raises(PreconditionError):
        burst_timings(0, sensor)


def test_trajectory_angular_velocity_matches_poses():
    traj = Trajectory((
        Keyframe(0, RotationMatrix.identity()),
        Keyframe(100_000_000, rot_y(0.2) @ RotationMatrix.from_rotvec([0.05, 0.0, 0.1])),
    ))
    t, dt = 40_000_000, 1_000
    r0, _ = traj.pose(t)
    r1, _ = traj.pose(t + dt)
    finite = (r1 @ r0.T).as_rotvec() / (dt * 1e-9)
    assert np.allclose(traj.angular_velocity(t), finite, rtol=1e-4, atol=1e-6)
    with pytest.raises(OutOfRange):
        traj.pose(100_000_001)


def test_static_preset_has_identity_truth():
    burst = simulate_burst("static", n_frames=3, width=64, height=64, margin=16)
    assert len(burst.frames) == len(burst.timings) == 3
    for h in burst.true_homographies:
        assert np.allclose(h.normalized().h, np.eye(3))
    assert burst.to_burst().meta["preset"] == "static"


def test_unknown_preset():
    with pytest.raises(PreconditionError):
        simulate_burst("spin", n_frames=2)


def test_truth_homography_aligns_clean_frames():
    burst = simulate_burst("offset", n_frames=6, sensor=CLEAN_SENSOR, width=128, height=128)
    reference = burst.clean_reference
    for frame, h in zip(burst.frames[1:], burst.true_homographies[1:]):
        warped = warp_frame(frame, h)
        valid = warped.valid_mask
        assert valid.mean() > 0.9
        assert np.mean(np.abs(warped.data - reference.data)[valid]) < 0.02


def test_gyro_trace_integrates_to_true_rotations():
    sensor = CLEAN_SENSOR
    burst = simulate_burst("inplane", n_frames=5, sensor=sensor, width=96, height=96)
    traj = preset_trajectory("inplane", 5, sensor)
    r_first, _ = traj.pose(burst.timings[0].midpoint)
    for timing, r_gyro in zip(burst.timings, interframe_rotations(burst.trace, burst.timings)):
        r_true, _ = traj.pose(timing.midpoint)
        assert r_gyro.angle_to(r_true @ r_first.T) < 1e-6


def test_large_excursion_is_rejected():
    with pytest.raises(ExcursionTooLarge):
        simulate_burst("xaxis", n_frames=16, width=96, height=96, margin=8)


def test_frame_noise_is_seeded():
    a = simulate_burst("static", n_frames=2, seed=3, width=64, height=64, margin=16)
    b = simulate_burst("static", n_frames=2, seed=3, width=64, height=64, margin=16)
    c = simulate_burst("static", n_frames=2, seed=4, width=64, height=64, margin=16)
    assert np.array_equal(a.frames[1].data, b.frames[1].data)
    assert not np.array_equal(a.frames[1].data, c.frames[1].data)
    assert np.array_equal(a.trace.omega, b.trace.omega)


def test_psnr_values():
    half = Image.constant(8, 8, 0.5)
    assert psnr(half, Image.constant(8, 8, 0.6)) == pytest.approx(20.0)
    assert psnr(half, half) == PSNR_CAP_DB


def test_homography_error_of_unit_shift():
    truth = Homography(np.array([[1.0, 0.01, 2.0], [0.0, 1.0, -1.0], [1e-5, 0.0, 1.0]]))
    shifted = Homography.translation(1.0, 0.0) @ truth
    assert homography_error(shifted, truth, (128, 96)) == pytest.approx(1.0)
    assert homography_error(truth, truth, (128, 96)) == pytest.approx(0.0, abs=1e-12)


def test_frame_noise_matches_sensor_sigma():
    sensor = SensorModel(image_noise_sigma=0.02)
    margin = 16
    scene = Image.constant(512 + 2 * margin, 512 + 2 * margin, 0.5)
    traj = preset_trajectory("static", 2, sensor)
    burst = render_burst(scene, traj, sensor, CameraIntrinsics.centered(512, 512, 300.0), 1.0,
                         rng_seed=8, n_frames=2, margin=margin)
    for frame in burst.frames:
        assert frame.shape == (512, 512)
        assert np.std(frame.data - 0.5) == pytest.approx(0.02, rel=0.02)
