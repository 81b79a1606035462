"""Scenario runner: wires simulator, odometry, mapping, planning, and the
base controllers together for the three quantitative demonstrations plus a
free-drive teleoperation mode.

Sim time advances on a fixed 5 ms step; periodic tasks (50 Hz control,
120 Hz pose stream, 5 Hz clouds, 10 Hz cost-map fusion) run on their own
due-time grids inside the step loop, deterministically ordered.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .base_control import (
    DockingController,
    DockTimeout,
    EmaFilter,
    PathTracker,
    PoseController,
)
from .bus import Bus
from .config import Config
from .frames import Pose2, Pose3, Twist2, pose3_to_wire
from .manip import EeHoldController
from .mapping import (
    CostMap,
    GridGeometry,
    MappingPipeline,
    OccupancyGrid,
    costmap_to_bytes,
    cloud_to_bytes,
    inflate,
    rasterize_boxes,
)
from .planner import Path, PlanError, PlannerParams, extract_waypoints, needs_replan, plan
from .sim import OdometryModel, Scene, Simulator
from .swerve import clamp_twist

CONTROL_PERIOD = 1.0 / 50.0
POSE_PERIOD = 1.0 / 120.0
CLOUD_PERIOD = 1.0 / 5.0
FUSE_PERIOD = 1.0 / 10.0


@dataclass
class LoopRecord:
    index: int
    dx: float
    dz: float
    yaw_error: float
    ok: bool


@dataclass
class MetricsReport:
    """Per-run metrics; optional fields stay at their defaults when a
    scenario does not produce them."""

    scenario: str
    seed: int
    success: bool = False
    sim_time: float = 0.0
    wall_time: float = 0.0
    collision_count: int = 0
    loops: list[LoopRecord] = field(default_factory=list)
    scatter_radius: float | None = None
    marks: list[tuple[float, float]] = field(default_factory=list)
    max_ee_deviation: float | None = None
    deviation_trace: list[tuple[float, float]] = field(default_factory=list)
    replan_count: int = 0
    replan_latency: float | None = None
    plan_compute_max: float | None = None
    no_path: bool = False
    goal_reached: bool | None = None
    trajectory: list[tuple[float, float]] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)


class _Task:
    __slots__ = ("period", "fn", "next_due")

    def __init__(self, period: float, fn):
        self.period = period
        self.fn = fn
        self.next_due = 0.0


class Runner:
    """Owns one simulated run: steps the world, keeps the odometry estimate
    fresh, publishes bus topics, and executes registered periodic tasks."""

    def __init__(
        self,
        scene: Scene,
        cfg: Config,
        seed: int,
        closure: bool = True,
        bus: Bus | None = None,
        rate: float = 0.0,
    ):
        self.scene = scene
        self.cfg = cfg
        self.seed = seed
        self.rate = rate
        self.bus = bus if bus is not None else Bus()
        self.sim = Simulator(
            scene,
            seed=seed,
            limits=cfg.limits(),
            noise=cfg.noise(),
            dt=cfg.f("sim.dt"),
        )
        self.odom = OdometryModel(
            scene.home,
            noise=cfg.noise(),
            rng=self.sim.odometry_rng(),
            closure_enabled=closure,
            keyframe_spacing=cfg.f("odom.keyframe_spacing"),
            keyframe_radius=cfg.f("odom.keyframe_radius"),
            residual=cfg.f("odom.residual"),
            closure_min_travel=cfg.f("odom.closure_min_travel"),
        )
        self.ema = EmaFilter(cfg.f("base.ema_alpha"))
        self.limits = cfg.limits()
        self.geom = GridGeometry.from_bounds(*scene.bounds, cell_size=scene.cell_size)
        self.cmd = Twist2()  # filtered command applied to the sim each step
        self.pending_ee: Pose3 | None = None
        self.pending_lift_v: float | None = None
        self._tasks: list[_Task] = []
        self._prev_base = Pose2(scene.home.x, scene.home.z, scene.home.yaw)
        self.pose_history: list[Pose2] = [self._prev_base]

    # -- wiring ------------------------------------------------------------

    def add_task(self, period: float, fn) -> None:
        self._tasks.append(_Task(period, fn))

    def est(self) -> Pose2:
        return self.odom.state.est

    def set_command(self, raw: Twist2) -> None:
        """Clamp then EMA-filter the controller output; the result is the
        final commanded twist applied to the kinematics until refreshed."""
        clamped = clamp_twist(raw, self.limits)
        self.cmd = self.ema.step(clamped)
        self.bus.publish(
            "cmd_twist",
            {"vx": self.cmd.vx, "vy": self.cmd.vy, "omega": self.cmd.omega},
        )

    def current_speed(self) -> float:
        return self.cmd.norm_xy()

    def publish_pose(self, _t: float) -> None:
        est = self.est()
        self.pose_history.append(Pose2(est.x, est.z, est.yaw))
        if len(self.pose_history) > 8:
            del self.pose_history[:-8]
        quality = "good" if self.odom.state.quality.good else "degraded"
        self.bus.publish(
            "pose",
            {
                "x": est.x,
                "z": est.z,
                "yaw": est.yaw,
                "pose7": pose3_to_wire(Pose3.from_yaw_xz(est.x, est.z, est.yaw)),
                "quality": quality,
            },
        )
        b = self.sim.state.base
        self.bus.publish("true_pose", {"x": b.x, "z": b.z, "yaw": b.yaw})

    # -- main loop ----------------------------------------------------------

    def run(self, stop_fn, max_sim_time: float) -> float:
        """Step until stop_fn() is true or the sim-time budget runs out;
        returns the elapsed sim time."""
        wall_start = time.perf_counter()
        while self.sim.state.t < max_sim_time and not stop_fn():
            state = self.sim.step(
                self.cmd,
                lift_velocity=self.pending_lift_v,
                ee_cmd=self.pending_ee,
            )
            occluded = self.scene.occluded(state.t)
            self.odom.update(self._prev_base, state.base, occluded)
            self._prev_base = state.base
            self.bus.set_time(state.t)
            t = state.t
            for task in self._tasks:
                if t + 1e-12 >= task.next_due:
                    task.fn(t)
                    task.next_due += task.period
            if self.rate > 0.0:
                ahead = state.t / self.rate - (time.perf_counter() - wall_start)
                if ahead > 0.0:
                    time.sleep(min(ahead, 0.05))
        return self.sim.state.t


def _static_costmap(scene: Scene, geom: GridGeometry, cfg: Config) -> CostMap:
    boxes = [(b.cx, b.cz, b.sx, b.sz) for b in scene.boxes]
    grid = rasterize_boxes(boxes, geom)
    return inflate(grid, cfg.f("grid.inflation_radius"), cfg.f("grid.soft_band"))


def _plan_to(
    cost_map: CostMap,
    est: Pose2,
    target: tuple[float, float],
    cfg: Config,
    geom: GridGeometry,
) -> tuple[PathTracker, Path]:
    path = plan(cost_map, est, Pose2(target[0], target[1], 0.0), cfg.planner())
    wps = extract_waypoints(path, geom)
    tracker = PathTracker(wps.points, cfg.pursuit(), cfg.gains(), cfg.limits())
    return tracker, path


def _publish_plan(bus: Bus, path_points: list[tuple[float, float]]) -> None:
    bus.publish("plan", {"points": [[x, z] for x, z in path_points]})


# --- tally ---------------------------------------------------------------


def run_tally(
    scene: Scene,
    cfg: Config,
    seed: int,
    loops: int | None = None,
    bus: Bus | None = None,
) -> MetricsReport:
    """Loop the HOME -> P1 -> P2 -> P3 -> HOME route, two-stage dock, and
    mark with the arm at HOME; report per-loop drift and mark scatter."""
    report = MetricsReport("tally", seed)
    wall0 = time.perf_counter()
    closure = cfg.b("tally.loop_closure")
    n_loops = loops if loops is not None else cfg.i("tally.loops")
    runner = Runner(scene, cfg, seed, closure=closure, bus=bus)
    geom = runner.geom
    cost_map = _static_costmap(scene, geom, cfg)
    runner.bus.publish("costmap", costmap_to_bytes(cost_map))

    route = [scene.points[name] for name in (scene.route or ("P1", "P2", "P3"))]
    legs = route + [(scene.home.x, scene.home.z)]

    home_mark = runner.sim.ee_world().t
    report.marks.append((float(home_mark[0]), float(home_mark[2])))
    home_yaw0 = runner.sim.state.base.yaw

    mission = {
        "loop": 0,
        "leg": 0,
        "tracker": None,
        "docker": None,
        "failed": False,
        "done": False,
    }

    def mark_and_record(ok: bool) -> None:
        ee = runner.sim.ee_world().t
        dx = float(ee[0] - home_mark[0])
        dz = float(ee[2] - home_mark[2])
        yaw_err = runner.sim.state.base.yaw - home_yaw0
        report.marks.append((float(ee[0]), float(ee[2])))
        report.loops.append(LoopRecord(mission["loop"] + 1, dx, dz, yaw_err, ok))

    def control(t: float) -> None:
        if mission["done"]:
            runner.set_command(Twist2())
            return
        est = runner.est()
        if mission["docker"] is not None:
            try:
                twist, done = mission["docker"].step(est, CONTROL_PERIOD)
            except DockTimeout:
                report.notes.append(f"loop {mission['loop'] + 1}: dock timeout")
                mark_and_record(ok=False)
                twist, done = Twist2(), True
            runner.set_command(twist)
            if done:
                if mission["docker"] is not None and mission["docker"].result is not None:
                    mark_and_record(ok=not mission["failed"])
                mission["docker"] = None
                mission["loop"] += 1
                mission["leg"] = 0
                mission["failed"] = False
                if mission["loop"] >= n_loops:
                    mission["done"] = True
            return
        if mission["tracker"] is None:
            try:
                tracker, path = _plan_to(cost_map, est, legs[mission["leg"]], cfg, geom)
            except PlanError as e:
                report.notes.append(f"loop {mission['loop'] + 1}: {e}")
                mission["failed"] = True
                mission["leg"] = len(legs) - 1
                runner.set_command(Twist2())
                mission["docker"] = DockingController(
                    scene.home, cfg.gains(), cfg.limits(),
                    cfg.f("dock.trans_tol"), cfg.f("dock.yaw_tol"),
                    cfg.f("dock.settle_time"), cfg.f("dock.stage_timeout"),
                )
                return
            mission["tracker"] = tracker
            _publish_plan(runner.bus, tracker.waypoints)
        twist, done = mission["tracker"].step(est, runner.current_speed(), CONTROL_PERIOD)
        runner.set_command(twist)
        if done:
            mission["tracker"] = None
            mission["leg"] += 1
            if mission["leg"] >= len(legs):
                mission["docker"] = DockingController(
                    scene.home, cfg.gains(), cfg.limits(),
                    cfg.f("dock.trans_tol"), cfg.f("dock.yaw_tol"),
                    cfg.f("dock.settle_time"), cfg.f("dock.stage_timeout"),
                )

    runner.add_task(POSE_PERIOD, runner.publish_pose)
    runner.add_task(CONTROL_PERIOD, control)

    budget = 60.0 * n_loops
    report.sim_time = runner.run(lambda: mission["done"], budget)
    report.collision_count = runner.sim.state.collision_count
    drifts = [math.hypot(r.dx, r.dz) for r in report.loops]
    report.scatter_radius = max(drifts) if drifts else None
    report.success = (
        mission["done"]
        and report.collision_count == 0
        and all(r.ok for r in report.loops)
        and len(report.loops) == n_loops
    )
    report.wall_time = time.perf_counter() - wall0
    return report


# --- whole-body coordination ----------------------------------------------


def run_wholebody(
    scene: Scene,
    cfg: Config,
    seed: int,
    bus: Bus | None = None,
) -> MetricsReport:
    """Lateral base translation while the 120 Hz EE-hold loop (one-message
    pose latency, smoothed world target) keeps the end-effector's world
    pose fixed; reports the max world-frame deviation."""
    report = MetricsReport("wholebody", seed)
    wall0 = time.perf_counter()
    runner = Runner(scene, cfg, seed, closure=False, bus=bus)
    sim = runner.sim

    T_WB0 = sim.base_pose3()
    T_BE0 = sim.state.ee_offset.copy()
    T_WE0 = T_WB0.compose(T_BE0)
    hold = EeHoldController(
        T_WB0,
        T_BE0,
        tau_trans=cfg.f("wholebody.tau_trans"),
        tau_rot=cfg.f("wholebody.tau_rot"),
        smoothing=cfg.b("wholebody.smoothing"),
    )
    latency = cfg.i("wholebody.latency_frames")
    move = cfg.f("wholebody.move_distance")
    start_x, start_z = scene.home.x, scene.home.z
    state = {"moving": True, "last_tick": 0.0}

    def control(_t: float) -> None:
        traveled = math.hypot(sim.state.base.x - start_x, sim.state.base.z - start_z)
        if traveled >= move:
            state["moving"] = False
        raw = Twist2(0.0, cfg.f("pursuit.cruise_speed"), 0.0) if state["moving"] else Twist2()
        runner.set_command(raw)

    def hold_tick(t: float) -> None:
        runner.publish_pose(t)
        hist = runner.pose_history
        sample = hist[max(0, len(hist) - 1 - latency)]
        dt = t - state["last_tick"]
        state["last_tick"] = t
        if dt <= 0.0:
            return
        base_sample = Pose3.from_yaw_xz(sample.x, sample.z, sample.yaw)
        cmd = hold.update(base_sample, dt)
        runner.pending_ee = cmd
        runner.bus.publish("ee_state", {"pose7": pose3_to_wire(sim.ee_world())})

    def track_deviation(t: float) -> None:
        dev = float(np.linalg.norm(sim.ee_world().t - T_WE0.t))
        report.deviation_trace.append((t, dev))

    runner.add_task(POSE_PERIOD, hold_tick)
    runner.add_task(CONTROL_PERIOD, control)
    runner.add_task(cfg.f("sim.dt"), track_deviation)

    def stopped() -> bool:
        return not state["moving"] and runner.current_speed() < 1e-4

    report.sim_time = runner.run(stopped, 30.0)
    report.collision_count = sim.state.collision_count
    report.max_ee_deviation = max(d for _, d in report.deviation_trace)
    report.success = report.collision_count == 0 and not state["moving"]
    report.wall_time = time.perf_counter() - wall0
    return report


# --- dynamic obstacle avoidance ---------------------------------------------


def run_obstacle(
    scene: Scene,
    cfg: Config,
    seed: int,
    bus: Bus | None = None,
) -> MetricsReport:
    """Navigate to the scene goal with live local mapping while a scripted
    walker crosses the route; replan when the fused map blocks the path."""
    if scene.goal is None:
        raise ValueError("obstacle scenario needs a goal in the scene")
    report = MetricsReport("obstacle", seed)
    wall0 = time.perf_counter()
    runner = Runner(scene, cfg, seed, closure=True, bus=bus)
    geom = runner.geom
    boxes = [(b.cx, b.cz, b.sx, b.sz) for b in scene.boxes]
    prior = rasterize_boxes(boxes, geom)
    pipeline = MappingPipeline(
        geom,
        voxel_size=cfg.f("mapping.voxel_size"),
        outlier_radius=cfg.f("mapping.outlier_radius"),
        outlier_neighbors=cfg.i("mapping.outlier_neighbors"),
        floor_band_map=cfg.f("mapping.floor_band"),
        floor_band_grid=cfg.f("grid.floor_band"),
        robot_height=cfg.f("grid.robot_height"),
        inflation_radius=cfg.f("grid.inflation_radius"),
        soft_band=cfg.f("grid.soft_band"),
        fuse_lambda=cfg.f("grid.fuse_lambda"),
        static_grid=prior,
        integrate_global=False,
    )
    goal = scene.goal
    mission: dict = {
        "tracker": None,
        "path": None,
        "block_time": None,
        "halted": False,
        "reached": False,
        "progress": 0,
    }

    def try_plan(fused: CostMap, t: float) -> None:
        t0 = time.perf_counter()
        try:
            path = plan(fused, runner.est(), goal, cfg.planner())
        except PlanError as e:
            mission["tracker"] = None
            mission["path"] = None
            if not mission["halted"]:
                report.notes.append(f"t={t:.2f}: {e}")
            mission["halted"] = True
            report.no_path = True
            return
        finally:
            dt_wall = time.perf_counter() - t0
            if report.plan_compute_max is None or dt_wall > report.plan_compute_max:
                report.plan_compute_max = dt_wall
        if needs_replan(path, fused):
            raise AssertionError("published plan intersects a lethal cell")
        wps = extract_waypoints(path, geom)
        mission["tracker"] = PathTracker(wps.points, cfg.pursuit(), cfg.gains(), cfg.limits())
        mission["path"] = path
        mission["progress"] = 0
        mission["halted"] = False
        _publish_plan(runner.bus, wps.points)

    def cloud_tick(t: float) -> None:
        cloud = runner.sim.render_depth()
        runner.bus.publish("cloud", cloud_to_bytes(cloud))
        sensor_pose = runner.sim.camera_pose(base=runner.est())
        pipeline.on_cloud(cloud, sensor_pose, runner.odom.state.quality)
        if mission["path"] is not None and mission["block_time"] is None:
            fused = pipeline.fused()
            if needs_replan(mission["path"], fused, mission["progress"]):
                mission["block_time"] = t

    def fuse_tick(t: float) -> None:
        fused = pipeline.fused()
        runner.bus.publish("costmap", costmap_to_bytes(fused))
        if mission["reached"]:
            return
        if mission["path"] is not None:
            _advance_progress(mission, runner.est(), geom)
        blocked = mission["path"] is not None and needs_replan(
            mission["path"], fused, mission["progress"]
        )
        if blocked or mission["halted"]:
            if blocked and mission["block_time"] is None:
                mission["block_time"] = t
            try_plan(fused, t)
            if mission["path"] is not None and mission["block_time"] is not None:
                latency = t - mission["block_time"]
                report.replan_count += 1
                if report.replan_latency is None or latency > report.replan_latency:
                    report.replan_latency = latency
                mission["block_time"] = None

    def control(t: float) -> None:
        report.trajectory.append((runner.sim.state.base.x, runner.sim.state.base.z))
        if mission["reached"] or mission["tracker"] is None:
            runner.set_command(Twist2())
            return
        twist, done = mission["tracker"].step(
            runner.est(), runner.current_speed(), CONTROL_PERIOD
        )
        runner.set_command(twist)
        if done:
            mission["reached"] = True
            mission["tracker"] = None

    runner.add_task(POSE_PERIOD, runner.publish_pose)
    runner.add_task(CLOUD_PERIOD, cloud_tick)
    runner.add_task(FUSE_PERIOD, fuse_tick)
    runner.add_task(CONTROL_PERIOD, control)

    # initial plan on the static prior
    try_plan(pipeline.fused(), 0.0)

    report.sim_time = runner.run(lambda: mission["reached"], cfg.f("obstacle.timeout"))
    report.collision_count = runner.sim.state.collision_count
    report.goal_reached = mission["reached"]
    report.success = mission["reached"] and report.collision_count == 0
    report.wall_time = time.perf_counter() - wall0
    return report


def _advance_progress(mission: dict, est: Pose2, geom: GridGeometry) -> None:
    """Monotone index of the path cell nearest the robot; replan checks
    only consider the untraversed suffix."""
    path: Path = mission["path"]
    best = mission["progress"]
    best_d = float("inf")
    for i in range(mission["progress"], len(path.cells)):
        cx, cz = geom.center(*path.cells[i])
        d = (est.x - cx) ** 2 + (est.z - cz) ** 2
        if d < best_d:
            best_d = d
            best = i
    mission["progress"] = best


# --- freeplay (teleoperation) -------------------------------------------


def run_freeplay(
    scene: Scene,
    cfg: Config,
    seed: int,
    bus: Bus | None = None,
    rate: float = 1.0,
    duration: float = 0.0,
    stop_fn=None,
) -> MetricsReport:
    """Live sim for the teleoperation UI: consumes cmd_twist/cmd_lift from
    the bus, serves goal requests with plan+track, publishes maps and poses.
    """
    report = MetricsReport("freeplay", seed)
    wall0 = time.perf_counter()
    runner = Runner(scene, cfg, seed, closure=True, bus=bus, rate=rate)
    geom = runner.geom
    boxes = [(b.cx, b.cz, b.sx, b.sz) for b in scene.boxes]
    prior = rasterize_boxes(boxes, geom)
    pipeline = MappingPipeline(
        geom,
        static_grid=prior,
        integrate_global=False,
        inflation_radius=cfg.f("grid.inflation_radius"),
        soft_band=cfg.f("grid.soft_band"),
    )
    sub_twist = runner.bus.subscribe("cmd_twist", maxlen=8)
    sub_lift = runner.bus.subscribe("cmd_lift", maxlen=8)
    state: dict = {"teleop": Twist2(), "teleop_t": -1.0, "tracker": None,
                   "goal": None, "cmd_count": 0, "t": 0.0}

    def on_goal(payload: dict) -> dict:
        try:
            g = Pose2(float(payload["x"]), float(payload["z"]), float(payload.get("yaw", 0.0)))
        except (KeyError, TypeError, ValueError):
            return {"ok": False, "error": "goal needs x and z"}
        state["goal"] = g
        return {"ok": True}

    def on_scenario(payload: dict) -> dict:
        if payload.get("cmd") == "status":
            b = runner.sim.state.base
            return {
                "ok": True,
                "t": runner.sim.state.t,
                "x": b.x,
                "z": b.z,
                "yaw": b.yaw,
                "collisions": runner.sim.state.collision_count,
                "cmd_count": state["cmd_count"],
                "lift": runner.sim.state.lift.height,
            }
        if payload.get("cmd") == "stop":
            state["goal"] = None
            state["tracker"] = None
            return {"ok": True}
        return {"ok": False, "error": "unknown command"}

    runner.bus.serve("goal", on_goal)
    runner.bus.serve("scenario", on_scenario)

    def control(t: float) -> None:
        # only messages tagged source=teleop are external commands; our own
        # republished cmd_twist lacks the tag and is ignored
        for m in sub_twist.drain():
            try:
                doc = m.json()
            except ValueError:
                continue
            if doc.get("source") == "teleop":
                state["teleop"] = Twist2(
                    float(doc.get("vx", 0.0)),
                    float(doc.get("vy", 0.0)),
                    float(doc.get("omega", 0.0)),
                )
                state["teleop_t"] = t
                state["cmd_count"] += 1
        for m in sub_lift.drain():
            try:
                doc = m.json()
            except ValueError:
                continue
            runner.pending_lift_v = float(doc.get("velocity", 0.0))
        if state["goal"] is not None and state["tracker"] is None:
            try:
                fused = pipeline.fused()
                path = plan(fused, runner.est(), state["goal"], cfg.planner())
                wps = extract_waypoints(path, geom)
                state["tracker"] = PathTracker(
                    wps.points, cfg.pursuit(), cfg.gains(), cfg.limits()
                )
                _publish_plan(runner.bus, wps.points)
            except PlanError as e:
                report.notes.append(str(e))
                state["goal"] = None
        teleop_fresh = t - state["teleop_t"] <= 0.5
        if teleop_fresh and state["teleop"].norm_xy() + abs(state["teleop"].omega) > 1e-9:
            state["goal"] = None
            state["tracker"] = None
            runner.set_command(state["teleop"])
        elif state["tracker"] is not None:
            twist, done = state["tracker"].step(
                runner.est(), runner.current_speed(), CONTROL_PERIOD
            )
            runner.set_command(twist)
            if done:
                state["tracker"] = None
                state["goal"] = None
        elif teleop_fresh:
            runner.set_command(state["teleop"])
        else:
            runner.set_command(Twist2())

    def cloud_tick(t: float) -> None:
        cloud = runner.sim.render_depth()
        runner.bus.publish("cloud", cloud_to_bytes(cloud))
        pipeline.on_cloud(cloud, runner.sim.camera_pose(base=runner.est()),
                          runner.odom.state.quality)

    def fuse_tick(t: float) -> None:
        runner.bus.publish("costmap", costmap_to_bytes(pipeline.fused()))
        runner.bus.publish("lift_state", {
            "height": runner.sim.state.lift.height,
            "velocity": runner.sim.state.lift.velocity,
        })
        runner.bus.publish("ee_state", {"pose7": pose3_to_wire(runner.sim.ee_world())})

    runner.add_task(POSE_PERIOD, runner.publish_pose)
    runner.add_task(CLOUD_PERIOD, cloud_tick)
    runner.add_task(FUSE_PERIOD, fuse_tick)
    runner.add_task(CONTROL_PERIOD, control)

    budget = duration if duration > 0.0 else float("inf")
    report.sim_time = runner.run(stop_fn or (lambda: False), budget)
    report.collision_count = runner.sim.state.collision_count
    report.success = report.collision_count == 0
    report.wall_time = time.perf_counter() - wall0
    return report
