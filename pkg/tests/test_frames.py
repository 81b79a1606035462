import math

import numpy as np
import pytest

from yor.frames import (
    Pose2,
    Pose3,
    Twist2,
    body_to_world,
    compose,
    integrate_pose2,
    inverse,
    normalize_angle,
    pose3_from_wire,
    pose3_to_wire,
    quat_about_y,
    quat_identity,
    quat_normalize,
    quat_to_matrix,
    slerp,
    world_to_body,
)


def _rand_pose(rng) -> Pose3:
    q = quat_normalize(rng.normal(size=4))
    return Pose3(q, rng.uniform(-2, 2, 3))


def _homogeneous(p: Pose3) -> np.ndarray:
    m = np.eye(4)
    m[:3, :3] = quat_to_matrix(p.q)
    m[:3, 3] = p.t
    return m


class TestCompose:
    def test_identity(self):
        rng = np.random.default_rng(0)
        p = _rand_pose(rng)
        out = compose(Pose3.identity(), p)
        np.testing.assert_allclose(out.t, p.t, atol=1e-12)
        np.testing.assert_allclose(np.abs(np.dot(out.q, p.q)), 1.0, atol=1e-12)

    def test_commuting_translations(self):
        a = Pose3.from_translation(1, 0, 0)
        b = Pose3.from_translation(0, 2, 0)
        np.testing.assert_allclose(compose(a, b).t, [1, 2, 0], atol=1e-12)

    def test_rotation_then_translation_vs_matrix_oracle(self):
        # yaw +90 about vertical composed with a translation, checked against
        # 4x4 homogeneous matrix multiplication
        a = Pose3(quat_about_y(math.pi / 2), np.zeros(3))
        b = Pose3.from_translation(1, 0, 0)
        out = compose(a, b)
        expected = _homogeneous(a) @ _homogeneous(b)
        np.testing.assert_allclose(_homogeneous(out), expected, atol=1e-12)

    def test_random_vs_matrix_oracle(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            a, b = _rand_pose(rng), _rand_pose(rng)
            out = compose(a, b)
            expected = _homogeneous(a) @ _homogeneous(b)
            np.testing.assert_allclose(_homogeneous(out), expected, atol=1e-9)

    def test_associativity(self):
        rng = np.random.default_rng(2)
        a, b, c = (_rand_pose(rng) for _ in range(3))
        left = compose(compose(a, b), c)
        right = compose(a, compose(b, c))
        np.testing.assert_allclose(_homogeneous(left), _homogeneous(right), atol=1e-9)


class TestInverse:
    def test_identity(self):
        out = inverse(Pose3.identity())
        np.testing.assert_allclose(out.t, np.zeros(3), atol=1e-12)

    def test_pure_translation(self):
        out = inverse(Pose3.from_translation(1, 2, 3))
        np.testing.assert_allclose(out.t, [-1, -2, -3], atol=1e-12)

    def test_roundtrip_and_matrix_oracle(self):
        rng = np.random.default_rng(3)
        for _ in range(1000):
            p = _rand_pose(rng)
            inv = inverse(p)
            rt = compose(p, inv)
            np.testing.assert_allclose(rt.t, np.zeros(3), atol=1e-9)
            assert abs(abs(rt.q[0]) - 1.0) < 1e-9
            np.testing.assert_allclose(
                _homogeneous(inv), np.linalg.inv(_homogeneous(p)), atol=1e-9
            )


class TestSlerp:
    def test_same_quaternion(self):
        q = quat_normalize(np.array([0.3, 0.2, -0.5, 0.7]))
        out = slerp(q, q, 0.5)
        np.testing.assert_allclose(np.abs(np.dot(out, q)), 1.0, atol=1e-12)

    def test_halfway_yaw(self):
        out = slerp(quat_identity(), quat_about_y(math.pi / 2), 0.5)
        np.testing.assert_allclose(out, quat_about_y(math.pi / 4), atol=1e-12)

    def test_axis_angle_oracle(self):
        # slerp from identity along a fixed axis equals axis-angle interpolation
        angle = math.radians(170.0)
        out = slerp(quat_identity(), quat_about_y(angle), 0.3)
        np.testing.assert_allclose(out, quat_about_y(0.3 * angle), atol=1e-12)
        assert math.degrees(0.3 * angle) == pytest.approx(51.0)

    def test_shortest_arc(self):
        q1 = quat_about_y(math.radians(170.0))
        out = slerp(quat_identity(), -q1, 0.3)
        np.testing.assert_allclose(np.abs(out), np.abs(quat_about_y(0.3 * math.radians(170))), atol=1e-12)

    def test_unit_norm_random(self):
        rng = np.random.default_rng(4)
        for _ in range(500):
            q0 = quat_normalize(rng.normal(size=4))
            q1 = quat_normalize(rng.normal(size=4))
            out = slerp(q0, q1, rng.uniform())
            assert abs(np.linalg.norm(out) - 1.0) < 1e-9


class TestAngles:
    @pytest.mark.parametrize("k", [-2, -1, 0, 1, 2])
    def test_wrap_invariance(self, k):
        rng = np.random.default_rng(5)
        for psi in rng.uniform(-3.0, 3.0, 100):
            a = normalize_angle(psi + 2 * math.pi * k)
            b = normalize_angle(psi)
            assert abs(normalize_angle(a - b)) < 1e-9

    def test_tie_at_pi(self):
        assert normalize_angle(math.pi) == pytest.approx(math.pi)
        assert normalize_angle(-math.pi) == pytest.approx(math.pi)
        assert normalize_angle(3 * math.pi) == pytest.approx(math.pi)

    def test_range(self):
        rng = np.random.default_rng(6)
        for psi in rng.uniform(-50, 50, 1000):
            out = normalize_angle(psi)
            assert -math.pi < out <= math.pi


class TestPlanarFrames:
    def test_heading_convention(self):
        # psi = 0 faces +Z, psi = pi/2 faces +X
        dx, dz = body_to_world(0.0, 1.0, 0.0)
        assert (dx, dz) == pytest.approx((0.0, 1.0))
        dx, dz = body_to_world(math.pi / 2, 1.0, 0.0)
        assert (dx, dz) == pytest.approx((1.0, 0.0))

    def test_world_body_roundtrip(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            yaw, wx, wz = rng.uniform(-3, 3, 3)
            fx, fl = world_to_body(yaw, wx, wz)
            bx, bz = body_to_world(yaw, fx, fl)
            assert (bx, bz) == pytest.approx((wx, wz), abs=1e-12)

    def test_integrate_matches_pose3_embedding(self):
        pose = Pose2(0.5, -0.2, 0.7)
        twist = Twist2(0.2, -0.1, 0.0)
        stepped = integrate_pose2(pose, twist, 0.1)
        # the same displacement through the SE(3) embedding
        body = Pose3.from_yaw_xz(pose.x, pose.z, pose.yaw)
        local = np.array([twist.vy * 0.1, 0.0, twist.vx * 0.1])
        world = body.transform(local)
        assert stepped.x == pytest.approx(world[0], abs=1e-12)
        assert stepped.z == pytest.approx(world[2], abs=1e-12)


class TestWire:
    def test_order_vector_first_scalar_last(self):
        p = Pose3(quat_about_y(0.4), np.array([1.0, 2.0, 3.0]))
        wire = pose3_to_wire(p)
        assert wire[3] == pytest.approx(math.cos(0.2))  # qw last in the quaternion block
        assert wire[4:] == pytest.approx([1.0, 2.0, 3.0])

    def test_roundtrip(self):
        rng = np.random.default_rng(8)
        for _ in range(100):
            p = _rand_pose(rng)
            out = pose3_from_wire(pose3_to_wire(p))
            np.testing.assert_allclose(out.t, p.t, atol=1e-12)
            np.testing.assert_allclose(out.q, p.q, atol=1e-12)

    def test_bad_length(self):
        with pytest.raises(ValueError):
            pose3_from_wire([1, 2, 3])
