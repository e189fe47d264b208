"""Tests for camera geometry and rotation decomposition."""

import math

import numpy as np
import pytest
from scipy.spatial.transform import Rotation as ScipyRotation

from hand3d.errors import NonPositiveDepth, NotARotation
from hand3d.geometry import (
    AxisAngle,
    CameraIntrinsics,
    CameraPose,
    PixelCoord,
    Rotation3,
    Vec3,
    camera_shift,
    compose,
    is_visible,
    project,
    relative_pose,
    rotation_from_axis_angle,
    to_axis_angle,
    transform_to_camera,
)

ROT_Z_90 = np.array([
    [0.0, -1.0, 0.0],
    [1.0, 0.0, 0.0],
    [0.0, 0.0, 1.0],
])


def random_pose(rng: np.random.Generator) -> CameraPose:
    r = ScipyRotation.random(random_state=int(rng.integers(2**31))).as_matrix()
    t = rng.uniform(-2.0, 2.0, size=3)
    return CameraPose(Rotation3(r), Vec3.from_array(t))


class TestVec3:
    def test_arithmetic(self):
        assert Vec3(1, 2, 3) - Vec3(0.5, 0, 1) == Vec3(0.5, 2.0, 2.0)
        assert Vec3(1, 2, 3) + Vec3(1, 1, 1) == Vec3(2, 3, 4)
        assert -Vec3(1, -2, 3) == Vec3(-1, 2, -3)

    def test_norm(self):
        assert Vec3(3, 4, 0).norm() == 5.0

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError, match="finite"):
            Vec3(float("nan"), 0, 0)
        with pytest.raises(ValueError, match="finite"):
            Vec3(0, float("inf"), 0)

    def test_array_round_trip(self):
        v = Vec3(0.1, -0.2, 0.3)
        assert Vec3.from_array(v.as_array()) == v


class TestRotation3:
    def test_accepts_identity_and_locks_storage(self):
        r = Rotation3(np.eye(3))
        assert not r.matrix.flags.writeable

    def test_rejects_scaled_matrix(self):
        with pytest.raises(NotARotation):
            Rotation3(2.0 * np.eye(3))

    def test_rejects_reflection(self):
        with pytest.raises(NotARotation, match="determinant"):
            Rotation3(np.diag([1.0, 1.0, -1.0]))

    def test_rejects_small_perturbation(self):
        m = np.eye(3)
        m[0, 1] = 1e-6
        with pytest.raises(NotARotation):
            Rotation3(m)

    def test_rejects_bad_shape(self):
        with pytest.raises(NotARotation, match="3x3"):
            Rotation3(np.eye(4))


class TestTransformAndProject:
    @pytest.fixture
    def intrinsics(self):
        return CameraIntrinsics(fx=500.0, fy=500.0, cx=320.0, cy=240.0, width=640, height=480)

    def test_identity_pose_is_noop(self):
        p = transform_to_camera(Vec3(0.1, 0.2, 0.3), CameraPose.identity())
        assert p == Vec3(0.1, 0.2, 0.3)

    def test_rotation_z90_by_hand(self):
        # (x, y) -> (-y, x), z unchanged
        pose = CameraPose(Rotation3(ROT_Z_90), Vec3(0, 0, 0))
        p = transform_to_camera(Vec3(1.0, 2.0, 3.0), pose)
        np.testing.assert_allclose(p.as_array(), [-2.0, 1.0, 3.0], atol=1e-15)

    def test_translation_applies_after_rotation(self):
        pose = CameraPose(Rotation3(ROT_Z_90), Vec3(1.0, 0.0, -1.0))
        p = transform_to_camera(Vec3(1.0, 0.0, 0.0), pose)
        np.testing.assert_allclose(p.as_array(), [1.0, 1.0, -1.0], atol=1e-15)

    def test_principal_ray_hits_principal_point(self, intrinsics):
        px = project(Vec3(0.0, 0.0, 1.0), intrinsics)
        assert (px.u, px.v) == (320.0, 240.0)

    def test_projection_formula(self):
        k = CameraIntrinsics(fx=1000.0, fy=1000.0, cx=0.0, cy=0.0, width=10, height=10)
        px = project(Vec3(0.1, -0.05, 2.0), k)
        np.testing.assert_allclose([px.u, px.v], [50.0, -25.0], atol=1e-12)

    def test_depth_at_epsilon_rejected(self, intrinsics):
        with pytest.raises(NonPositiveDepth):
            project(Vec3(0.0, 0.0, 0.01), intrinsics)
        with pytest.raises(NonPositiveDepth):
            project(Vec3(0.0, 0.0, -1.0), intrinsics)

    def test_depth_epsilon_is_configurable(self, intrinsics):
        px = project(Vec3(0.0, 0.0, 0.005), intrinsics, depth_epsilon=0.001)
        assert (px.u, px.v) == (320.0, 240.0)

    def test_backprojection_round_trip(self, intrinsics):
        rng = np.random.default_rng(7)
        for _ in range(100):
            p = Vec3(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(0.2, 3.0))
            px = project(p, intrinsics)
            back = p.z * np.array([(px.u - intrinsics.cx) / intrinsics.fx,
                                   (px.v - intrinsics.cy) / intrinsics.fy,
                                   1.0])
            np.testing.assert_allclose(back, p.as_array(), atol=1e-9)


class TestIsVisible:
    k = CameraIntrinsics(fx=100.0, fy=100.0, cx=32.0, cy=32.0, width=64, height=64)

    @pytest.mark.parametrize("u,v,expected", [
        (0.0, 0.0, True),
        (63.999, 63.999, True),
        (64.0, 10.0, False),
        (10.0, 64.0, False),
        (-0.001, 10.0, False),
        (10.0, -0.001, False),
    ])
    def test_bounds_half_open(self, u, v, expected):
        assert is_visible(PixelCoord(u, v), self.k) is expected


class TestRelativePose:
    def test_identical_poses_give_identity(self):
        rng = np.random.default_rng(3)
        p = random_pose(rng)
        rel = relative_pose(p, p)
        np.testing.assert_allclose(rel.rotation.matrix, np.eye(3), atol=1e-12)
        np.testing.assert_allclose(rel.translation.as_array(), np.zeros(3), atol=1e-12)

    def test_pure_rotation(self):
        p1 = CameraPose.identity()
        p2 = CameraPose(Rotation3(ROT_Z_90), Vec3(0, 0, 0))
        rel = relative_pose(p1, p2)
        np.testing.assert_allclose(rel.rotation.matrix, ROT_Z_90, atol=1e-15)
        np.testing.assert_allclose(rel.translation.as_array(), np.zeros(3), atol=1e-15)

    def test_composition_recovers_second_pose(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            p1, p2 = random_pose(rng), random_pose(rng)
            back = compose(relative_pose(p1, p2), p1)
            np.testing.assert_allclose(back.rotation.matrix, p2.rotation.matrix, atol=1e-12)
            np.testing.assert_allclose(back.translation.as_array(),
                                       p2.translation.as_array(), atol=1e-12)

    def test_forward_dolly_shift(self):
        # Camera centre advances 0.3 m along its own optical axis; the
        # world-to-camera translation therefore moves the other way.
        p1 = CameraPose.identity()
        p2 = CameraPose(Rotation3.identity(), Vec3(0.0, 0.0, -0.3))
        rel = relative_pose(p1, p2)
        np.testing.assert_allclose(rel.translation.as_array(), [0.0, 0.0, -0.3], atol=1e-15)
        np.testing.assert_allclose(camera_shift(rel).as_array(), [0.0, 0.0, 0.3], atol=1e-15)

    def test_camera_shift_matches_centre_motion(self):
        # camera_shift must equal the centre displacement expressed in the
        # first camera's coordinates, for arbitrary poses.
        rng = np.random.default_rng(29)
        for _ in range(50):
            p1, p2 = random_pose(rng), random_pose(rng)
            c1 = -p1.rotation.matrix.T @ p1.translation.as_array()
            c2 = -p2.rotation.matrix.T @ p2.translation.as_array()
            expected = p1.rotation.matrix @ (c2 - c1)
            got = camera_shift(relative_pose(p1, p2)).as_array()
            np.testing.assert_allclose(got, expected, atol=1e-12)


class TestAxisAngle:
    def test_identity_maps_to_zero(self):
        aa = to_axis_angle(Rotation3.identity())
        assert aa.angle_deg == 0.0
        assert aa.axis == Vec3(0.0, 0.0, 0.0)

    def test_rot_z90(self):
        aa = to_axis_angle(Rotation3(ROT_Z_90))
        np.testing.assert_allclose(aa.angle_deg, 90.0, atol=1e-12)
        np.testing.assert_allclose(aa.axis.as_array(), [0.0, 0.0, 1.0], atol=1e-12)

    def test_half_turn_about_x(self):
        m = np.diag([1.0, -1.0, -1.0])
        aa = to_axis_angle(Rotation3(m))
        np.testing.assert_allclose(aa.angle_deg, 180.0, atol=1e-9)
        np.testing.assert_allclose(np.abs(aa.axis.as_array()), [1.0, 0.0, 0.0], atol=1e-9)

    def test_raw_matrix_accepted(self):
        aa = to_axis_angle(ROT_Z_90)
        np.testing.assert_allclose(aa.angle_deg, 90.0, atol=1e-12)

    def test_raw_non_rotation_rejected(self):
        with pytest.raises(NotARotation):
            to_axis_angle(1.5 * np.eye(3))
        with pytest.raises(NotARotation):
            to_axis_angle(np.diag([1.0, 1.0, -1.0]))

    def test_tiny_angle_snaps_to_zero(self):
        tiny = rotation_from_axis_angle(AxisAngle(Vec3(0, 1, 0), math.degrees(5e-8)))
        aa = to_axis_angle(tiny)
        assert aa.angle_deg == 0.0
        assert aa.axis == Vec3(0.0, 0.0, 0.0)

    def test_angle_epsilon_configurable(self):
        quarter = rotation_from_axis_angle(AxisAngle(Vec3(0, 1, 0), 0.5))
        aa = to_axis_angle(quarter, angle_eps_rad=1.0)
        assert aa.angle_deg == 0.0

    def test_round_trip_random(self):
        rotations = ScipyRotation.random(500, random_state=123).as_matrix()
        for m in rotations:
            aa = to_axis_angle(Rotation3(m))
            assert 0.0 <= aa.angle_deg <= 180.0
            np.testing.assert_allclose(aa.axis.norm(), 1.0, atol=1e-9)
            rebuilt = rotation_from_axis_angle(aa)
            np.testing.assert_allclose(rebuilt.matrix, m, atol=1e-9)

    def test_round_trip_near_half_turn(self):
        rng = np.random.default_rng(17)
        for _ in range(100):
            u = rng.normal(size=3)
            u /= np.linalg.norm(u)
            gap = 10.0 ** rng.uniform(-12.0, -3.0)
            angle = math.degrees(math.pi - gap)
            m = rotation_from_axis_angle(AxisAngle(Vec3.from_array(u), angle)).matrix
            rebuilt = rotation_from_axis_angle(to_axis_angle(Rotation3(m)))
            np.testing.assert_allclose(rebuilt.matrix, m, atol=1e-9)

    def test_round_trip_exact_half_turn(self):
        rng = np.random.default_rng(19)
        for _ in range(50):
            u = rng.normal(size=3)
            u /= np.linalg.norm(u)
            m = rotation_from_axis_angle(AxisAngle(Vec3.from_array(u), 180.0)).matrix
            rebuilt = rotation_from_axis_angle(to_axis_angle(Rotation3(m)))
            np.testing.assert_allclose(rebuilt.matrix, m, atol=1e-9)

    def test_agrees_with_scipy(self):
        rotations = ScipyRotation.random(200, random_state=5)
        for rot in rotations:
            aa = to_axis_angle(Rotation3(rot.as_matrix()))
            rotvec = rot.as_rotvec()
            angle = np.linalg.norm(rotvec)
            np.testing.assert_allclose(math.radians(aa.angle_deg), angle, atol=1e-10)
            if angle > 1e-6:
                np.testing.assert_allclose(aa.axis.as_array(), rotvec / angle, atol=1e-8)

    def test_axis_angle_validation(self):
        with pytest.raises(ValueError, match="unit"):
            AxisAngle(Vec3(0.0, 0.5, 0.0), 10.0)
        with pytest.raises(ValueError, match=r"\[0, 180\]"):
            AxisAngle(Vec3(0.0, 1.0, 0.0), 181.0)
        with pytest.raises(ValueError, match="zero axis"):
            AxisAngle(Vec3(0.0, 0.0, 0.0), 10.0)


class TestRodrigues:
    def test_zero_angle_gives_identity(self):
        r = rotation_from_axis_angle(AxisAngle(Vec3(0, 0, 0), 0.0))
        np.testing.assert_allclose(r.matrix, np.eye(3), atol=1e-15)

    def test_z90_matches_hand_matrix(self):
        r = rotation_from_axis_angle(AxisAngle(Vec3(0, 0, 1), 90.0))
        np.testing.assert_allclose(r.matrix, ROT_Z_90, atol=1e-15)

    def test_matches_scipy_rotvec(self):
        rng = np.random.default_rng(31)
        for _ in range(100):
            u = rng.normal(size=3)
            u /= np.linalg.norm(u)
            angle = rng.uniform(0.0, 180.0)
            ours = rotation_from_axis_angle(AxisAngle(Vec3.from_array(u), angle)).matrix
            theirs = ScipyRotation.from_rotvec(u * math.radians(angle)).as_matrix()
            np.testing.assert_allclose(ours, theirs, atol=1e-12)
