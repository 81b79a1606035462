import math

import numpy as np
import pytest

from yor.frames import Pose2, Twist2
from yor.mapping import PoseQuality
from yor.sim import (
    Box,
    CameraModel,
    Keyframe,
    NoiseParams,
    OdometryModel,
    OdomState,
    Scene,
    Simulator,
    Walker,
    loop_closure_update,
    odometry_step,
    parse_scene,
)
from yor.swerve import VelocityLimits


def make_scene(**kw) -> Scene:
    scene = Scene()
    for k, v in kw.items():
        setattr(scene, k, v)
    return scene


class TestSceneParsing:
    def test_full_scene(self):
        text = """
        # comment
        bounds 0 0 4 4
        cell 0.05
        home 1.0 1.0 0.5
        point P1 2.0 1.0
        route P1
        box 2 2 0.5 0.5 1.0
        walker 0.6 0.2 3 1 3 3
        goal 3.5 3.5 0
        occlusion 5 6
        lift 0.8
        seed 7
        """
        scene = parse_scene(text)
        assert scene.home.x == 1.0 and scene.home.yaw == 0.5
        assert scene.points["P1"] == (2.0, 1.0)
        assert len(scene.boxes) == 1 and len(scene.walkers) == 1
        assert scene.occluded(5.5) and not scene.occluded(6.5)
        assert scene.seed == 7

    def test_unknown_key(self):
        with pytest.raises(ValueError, match="unknown scene key"):
            parse_scene("frobnicate 1 2 3")


class TestWalker:
    def test_ping_pong(self):
        w = Walker(1.0, 0.2, [(0.0, 0.0), (2.0, 0.0)])
        assert w.position(0.0) == (0.0, 0.0)
        assert w.position(1.0) == (1.0, 0.0)
        assert w.position(2.0) == (2.0, 0.0)
        assert w.position(3.0) == (1.0, 0.0)  # bouncing back
        assert w.position(4.0) == (0.0, 0.0)

    def test_parked(self):
        w = Walker(0.0, 0.2, [(1.0, 1.0)])
        assert w.position(123.4) == (1.0, 1.0)


class TestStepWorld:
    def test_zero_command_only_time_advances(self):
        sim = Simulator(make_scene(), seed=1)
        s0 = sim.state
        s1 = sim.step(Twist2())
        assert s1.t == pytest.approx(0.005)
        assert (s1.base.x, s1.base.z, s1.base.yaw) == (s0.base.x, s0.base.z, s0.base.yaw)

    def test_dt_validation(self):
        with pytest.raises(ValueError):
            Simulator(make_scene(), seed=1, dt=0.06)

    def test_straight_drive_displacement(self):
        scene = make_scene(bounds=(0, 0, 10, 10), home=Pose2(1, 1, 1.5708))
        sim = Simulator(scene, seed=1)
        for _ in range(800):  # 4 s at 0.25 m/s
            sim.step(Twist2(0.25, 0.0, 0.0))
        dist = math.hypot(sim.state.base.x - 1, sim.state.base.z - 1)
        accel_loss = 0.25**2 / (2 * VelocityLimits().drive_accel_max)
        assert dist == pytest.approx(1.0 - accel_loss, abs=0.02)

    def test_infeasible_twist_attenuated(self):
        limits = VelocityLimits(drive_accel_max=0.1)
        sim = Simulator(make_scene(bounds=(0, 0, 10, 10), home=Pose2(5, 5, 0)),
                        seed=1, limits=limits)
        sim.step(Twist2(0.25, 0, 0))
        # after one 5 ms step the drive can only reach 0.1 * 0.005
        assert sim.state.base.z - 5.0 <= 0.1 * 0.005 * 0.005 + 1e-12

    def test_collision_freezes_and_flags(self):
        scene = make_scene(
            bounds=(0, 0, 4, 4),
            home=Pose2(1.0, 1.0, 0.0),
            boxes=[Box(1.0, 1.5, 0.2, 0.2, 1.0)],  # wall 0.2 m ahead of footprint
        )
        sim = Simulator(scene, seed=1)
        collided = False
        for _ in range(200):  # 1 s driving straight at the wall
            s = sim.step(Twist2(0.25, 0.0, 0.0))
            if s.collided:
                collided = True
                break
        assert collided, "collision flag must raise within one second"
        # robot stopped at contact: footprint distance to the box ~ 0
        d = scene.boxes[0].distance_to_point(s.base.x, s.base.z)
        assert d >= 0.3 - 0.01
        assert sim.state.collision_count == 1

    def test_bitwise_determinism(self):
        scene = make_scene(bounds=(0, 0, 6, 6), home=Pose2(1, 1, 0.3),
                           boxes=[Box(3, 3, 0.5, 0.5, 1.0)])

        def trajectory(seed):
            sim = Simulator(scene, seed=seed)
            out = []
            for i in range(400):
                tw = Twist2(0.2 * math.sin(i * 0.01), 0.1, 0.3 * math.cos(i * 0.02))
                s = sim.step(tw)
                out.append((s.base.x, s.base.z, s.base.yaw))
            clouds = sim.render_depth().points.tobytes()
            return out, clouds

        a = trajectory(42)
        b = trajectory(42)
        assert a[0] == b[0]
        assert a[1] == b[1]


class TestRenderDepth:
    def test_empty_world_floor_only(self):
        scene = make_scene(bounds=(0, 0, 4, 4), home=Pose2(2, 2, 0))
        scene.camera = CameraModel(noise_coeff=0.0)
        sim = Simulator(scene, seed=3)
        cloud = sim.render_depth(noise=False)
        assert len(cloud) > 0
        # all returns lie on the floor plane y=0 in world coordinates
        pose = sim.camera_pose()
        from yor.frames import quat_to_matrix

        world = cloud.points @ quat_to_matrix(pose.q).T + pose.t
        assert np.max(np.abs(world[:, 1])) < 1e-6

    def test_box_face_z_depth(self):
        # level camera staring at a box face 2 m ahead: center-region pixels
        # return exactly depth 2.000 (z-depth convention)
        scene = make_scene(bounds=(0, 0, 10, 10), home=Pose2(5, 2, 0),
                           boxes=[Box(5.0, 4.1, 2.0, 0.2, 2.0)])
        scene.camera = CameraModel(noise_coeff=0.0, pitch_down=0.0)
        sim = Simulator(scene, seed=3)
        cloud = sim.render_depth(noise=False)
        face_z = 4.0 - (2.0 + scene.camera.y_offset) * 0 - 2.0  # camera at z=2, face at z=4
        center = cloud.points[
            (np.abs(cloud.points[:, 0]) < 0.2) & (np.abs(cloud.points[:, 1]) < 0.2)
        ]
        assert len(center) > 0
        np.testing.assert_allclose(center[:, 2], 2.0, atol=1e-9)

    def test_analytic_depth_accuracy(self):
        scene = make_scene(bounds=(0, 0, 10, 10), home=Pose2(5, 2, 0),
                           boxes=[Box(5.0, 5.0, 1.0, 1.0, 2.0)])
        scene.camera = CameraModel(noise_coeff=0.0, pitch_down=0.2)
        sim = Simulator(scene, seed=3)
        cloud = sim.render_depth(noise=False)
        pose = sim.camera_pose()
        from yor.frames import quat_to_matrix

        world = cloud.points @ quat_to_matrix(pose.q).T + pose.t
        box = scene.boxes[0]
        on_floor = np.abs(world[:, 1]) < 1e-6
        on_box = (
            (np.abs(world[:, 0] - 5.0) < 0.5 + 1e-6)
            & (world[:, 1] > -1e-6)
            & (np.abs(world[:, 2] - 5.0) < 0.5 + 1e-6)
        )
        assert np.all(on_floor | on_box)

    def test_max_range_cut(self):
        scene = make_scene(bounds=(0, 0, 40, 40), home=Pose2(20, 1, 0))
        scene.camera = CameraModel(noise_coeff=0.0, pitch_down=0.05, max_range=8.0)
        sim = Simulator(scene, seed=3)
        cloud = sim.render_depth(noise=False)
        assert np.all(cloud.points[:, 2] <= 8.0 + 1e-9)

    def test_occlusion_returns_few_pixels(self):
        scene = make_scene(bounds=(0, 0, 4, 4), home=Pose2(2, 2, 0),
                           occlusions=[(0.0, 10.0)])
        sim = Simulator(scene, seed=3)
        full_scene = make_scene(bounds=(0, 0, 4, 4), home=Pose2(2, 2, 0))
        sim_full = Simulator(full_scene, seed=3)
        occluded = sim.render_depth()
        clear = sim_full.render_depth()
        assert len(occluded) <= 0.12 * len(clear)

    def test_walker_cylinder_visible(self):
        scene = make_scene(bounds=(0, 0, 10, 10), home=Pose2(5, 2, 0),
                           walkers=[Walker(0.0, 0.3, [(5.0, 4.0)])])
        scene.camera = CameraModel(noise_coeff=0.0, pitch_down=0.0)
        sim = Simulator(scene, seed=3)
        cloud = sim.render_depth(noise=False)
        near = cloud.points[np.abs(cloud.points[:, 0]) < 0.1]
        assert len(near) > 0
        # closest pixel ray passes half a pixel off the cylinder axis
        assert np.min(near[:, 2]) == pytest.approx(2.0 - 0.3, abs=1e-3)


class TestOdometry:
    def test_zero_motion_unchanged(self):
        od = OdomState(est=Pose2(1, 2, 0.3))
        rng = np.random.default_rng(0)
        out = odometry_step(od, Pose2(0, 0, 0), Pose2(0, 0, 0), NoiseParams(), rng)
        assert (out.est.x, out.est.z, out.est.yaw) == (1, 2, 0.3)

    def test_zero_noise_exact(self):
        od = OdomState(est=Pose2(0, 0, 0))
        rng = np.random.default_rng(0)
        noise = NoiseParams(k_trans=0.0, k_yaw=0.0)
        pose = Pose2(0, 0, 0)
        for i in range(1, 201):
            new = Pose2(0.01 * i, 0.005 * i, 0.001 * i)
            odometry_step(od, pose, new, noise, rng)
            pose = new
        assert od.est.x == pytest.approx(pose.x, abs=1e-12)
        assert od.est.z == pytest.approx(pose.z, abs=1e-12)
        assert od.est.yaw == pytest.approx(pose.yaw, abs=1e-12)

    def test_occlusion_degrades_quality(self):
        od = OdomState(est=Pose2(0, 0, 0))
        rng = np.random.default_rng(0)
        odometry_step(od, Pose2(0, 0, 0), Pose2(0.01, 0, 0), NoiseParams(), rng,
                      occluded=True)
        assert not od.quality.good

    def test_rms_calibration_20m(self):
        # Monte-Carlo oracle: default noise gives ~50 mm RMS terminal error
        # over a 20 m path, independent of the step partition
        noise = NoiseParams()
        for step_len in (0.05, 0.2):
            sq = 0.0
            runs = 100
            for run in range(runs):
                rng = np.random.default_rng(1000 + run)
                od = OdomState(est=Pose2(0, 0, 0))
                pose = Pose2(0, 0, 0)
                n = int(round(20.0 / step_len))
                for i in range(n):
                    new = Pose2(pose.x + step_len, 0.0, 0.0)
                    odometry_step(od, pose, new, noise, rng)
                    pose = new
                sq += (od.est.x - pose.x) ** 2 + (od.est.z - pose.z) ** 2
            rms = math.sqrt(sq / runs)
            assert 0.035 <= rms <= 0.065, f"step {step_len}: rms {rms}"


class TestLoopClosure:
    def test_no_keyframe_no_change(self):
        od = OdomState(est=Pose2(0.1, 0.0, 0.05))
        out = loop_closure_update(od, Pose2(0, 0, 0))
        assert out.est.x == 0.1

    def test_residual_contraction(self):
        od = OdomState(est=Pose2(0.10, 0.0, 0.05))
        od.keyframes.append(Keyframe(Pose2(0, 0, 0), Pose2(0, 0, 0)))
        out = loop_closure_update(od, Pose2(0, 0, 0), residual=0.1)
        assert out.est.x == pytest.approx(0.010, abs=1e-12)
        assert out.est.yaw == pytest.approx(0.005, abs=1e-12)

    def test_repeated_contraction_geometric(self):
        od = OdomState(est=Pose2(0.10, 0.0, 0.0))
        od.keyframes.append(Keyframe(Pose2(0, 0, 0), Pose2(0, 0, 0)))
        for i in range(1, 4):
            loop_closure_update(od, Pose2(0, 0, 0), residual=0.1)
            assert od.est.x == pytest.approx(0.10 * 0.1**i, abs=1e-15)

    def test_never_increases_error(self):
        rng = np.random.default_rng(4)
        for _ in range(200):
            est = Pose2(*rng.uniform(-1, 1, 3))
            true = Pose2(*rng.uniform(-1, 1, 3))
            od = OdomState(est=est)
            od.keyframes.append(Keyframe(true, est))
            e0 = math.hypot(est.x - true.x, est.z - true.z)
            y0 = abs(est.yaw - true.yaw)
            loop_closure_update(od, true)
            e1 = math.hypot(od.est.x - true.x, od.est.z - true.z)
            y1 = abs(od.est.yaw - true.yaw)
            assert e1 <= e0 + 1e-12
            assert y1 <= y0 + 1e-12

    def test_model_records_keyframes_every_meter(self):
        model = OdometryModel(Pose2(0, 0, 0), noise=NoiseParams(0, 0),
                              closure_enabled=False)
        pose = Pose2(0, 0, 0)
        for i in range(1, 501):
            new = Pose2(0.01 * i, 0, 0)
            model.update(pose, new, occluded=False)
            pose = new
        # 5 m straight: keyframes at 0, ~1, ~2, ~3, ~4, ~5 but the one at 0
        # blocks re-recording within 0.5 m
        assert 4 <= len(model.state.keyframes) <= 7
