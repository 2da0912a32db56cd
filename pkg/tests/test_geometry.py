from __future__ import annotations

import numpy as np
import pytest

from gyroburst.core.errors import (
    DegenerateHomography,
    NonUnitNormal,
    PointAtInfinity,
    PreconditionError,
)
from gyroburst.core.geometry import (
    CameraIntrinsics,
    Homography,
    RotationMatrix,
    compose_initial_homography,
    decompose_homography,
    rot_x,
    rot_y,
    rot_z,
    to_camera_frame,
)


def test_rotation_rejects_non_orthonormal():
    with pytest.raises(PreconditionError):
        RotationMatrix(np.diag([1.0, 1.0, 1.001]))
    with pytest.raises(PreconditionError):
        RotationMatrix(np.diag([1.0, 1.0, -1.0]))


def test_nearest_rotation_is_proper():
    noisy = rot_z(0.3).m + 1e-3 * np.arange(9).reshape(3, 3)
    r = RotationMatrix.nearest(noisy)
    assert np.linalg.det(r.m) == pytest.approx(1.0, abs=1e-12)
    assert r.angle_to(rot_z(0.3)) < 1e-2


def test_geodesic_distance_of_axis_rotations():
    assert rot_z(0.25).angle_to(RotationMatrix.identity()) == pytest.approx(0.25, abs=1e-12)
    assert (rot_x(0.1) @ rot_x(0.2)).angle_to(rot_x(0.3)) < 1e-10
    assert rot_y(0.4).T.angle_to(rot_y(-0.4)) < 1e-10


def test_intrinsics_validation_and_inverse():
    with pytest.raises(PreconditionError):
        CameraIntrinsics(0.0, 300.0, 10.0, 10.0)
    k = CameraIntrinsics.centered(640, 480, 500.0)
    assert (k.cx, k.cy) == (319.5, 239.5)
    assert np.allclose(k.matrix @ k.inverse, np.eye(3))
    assert CameraIntrinsics.from_dict(k.to_dict()) == k


def test_homography_singular_and_normalize():
    with pytest.raises(DegenerateHomography):
        Homography(np.zeros((3, 3)))
    h = Homography(np.array([[1.0, 0.0, 1.0], [0.0, 1.0, 0.0], [1.0, 0.0, 1e-12]]))
    with pytest.raises(PreconditionError):
        h.normalized()
    scaled = Homography(4.0 * Homography.translation(2.0, 3.0).h)
    assert np.allclose(scaled.normalized().h, Homography.translation(2.0, 3.0).h)
    assert np.allclose(scaled.params8(), [1, 0, 2, 0, 1, 3, 0, 0])


def test_homography_composition_order():
    shift = Homography.translation(5.0, 0.0)
    scale = Homography(np.diag([2.0, 2.0, 1.0]))
    # (a @ b) applies b first
    assert np.allclose((scale @ shift).apply((1.0, 1.0)), [12.0, 2.0])
    assert np.allclose((shift @ scale).apply((1.0, 1.0)), [7.0, 2.0])
    assert np.allclose(shift.inverse().apply((5.0, 0.0)), [0.0, 0.0])


def test_point_at_infinity():
    h = Homography(np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 0.0, 1.0]]))
    with pytest.raises(PointAtInfinity):
        h.apply((-1.0, 0.0))
    with pytest.raises(PointAtInfinity):
        h.project(np.array([[0.0, 0.0], [-1.0, 3.0]]))
    assert np.allclose(h.project(np.array([[1.0, 2.0]])), [[0.5, 1.0]])


def test_compose_initial_homography_requires_unit_normal():
    with pytest.raises(NonUnitNormal):
        compose_initial_homography(Homography.identity(), [0.1, 0.0, 0.0], [0.0, 0.0, 2.0])
    h = compose_initial_homography(Homography.identity(), [0.1, 0.0, 0.0], [0.0, 0.0, 1.0])
    assert np.allclose(h.h, [[1.0, 0.0, 0.1], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])


def test_decompose_recovers_plane_motion():
    r = rot_y(0.05) @ rot_x(0.02)
    t = np.array([0.1, -0.05, 0.02])
    n = np.array([0.1, 0.2, 1.0])
    n = n / np.linalg.norm(n)
    h = Homography(2.5 * (r.m + np.outer(t, n)))

    d = decompose_homography(h, r)
    assert not d.degenerate
    assert d.r.angle_to(r) < 1e-8
    assert np.allclose(d.n, n, atol=1e-8)
    assert np.allclose(d.t, t, atol=1e-8)
    assert d.scale == pytest.approx(2.5)
    assert np.allclose(d.recompose() * d.scale, h.h)


def test_decompose_pure_rotation_is_flagged():
    r = rot_z(0.1) @ rot_x(-0.03)
    h = Homography(3.0 * r.m)
    d = decompose_homography(h, RotationMatrix.identity())
    assert d.degenerate
    assert np.allclose(d.t, 0.0)
    assert np.allclose(d.n, [0.0, 0.0, 1.0])
    assert d.r.angle_to(r) < 1e-9

    with pytest.raises(DegenerateHomography) as info:
        decompose_homography(h, RotationMatrix.identity(), strict=True)
    assert info.value.decomposition.degenerate


def test_to_camera_frame_conjugates_rotation():
    k = CameraIntrinsics.centered(201, 101, 250.0)
    assert np.allclose(to_camera_frame(RotationMatrix.identity(), k).h, np.eye(3))
    # a pan moves the principal point by f * tan(angle)
    moved = to_camera_frame(rot_y(0.01), k).apply((k.cx, k.cy))
    assert moved[0] - k.cx == pytest.approx(250.0 * np.tan(0.01), rel=1e-9)
    assert moved[1] == pytest.approx(k.cy)


def test_decompose_round_trip_on_random_planes():
    rng = np.random.default_rng(42)
    for _ in range(1000):
        r = RotationMatrix.from_rotvec(rng.uniform(-0.3, 0.3, 3))
        t = rng.normal(size=3)
        t *= rng.uniform(0.0, 0.5) / np.linalg.norm(t)
        n = np.array([rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), 1.0])
        n /= np.linalg.norm(n)

        h = compose_initial_homography(Homography(r.m), t, n)
        d = decompose_homography(h, r)
        assert np.linalg.norm(d.recompose() * d.scale - h.h) / np.linalg.norm(h.h) < 1e-6
        if np.linalg.norm(t) < 0.01:
            continue
        assert d.r.angle_to(r) < 1e-6
        assert np.linalg.norm(d.t - t) / np.linalg.norm(t) < 1e-6
        assert np.linalg.norm(d.n - n) < 1e-6
