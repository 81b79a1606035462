"""Deterministic 2.5D kinematic world simulator.

Provides swerve-limited base motion, a synthetic depth camera, an odometry
model with distance-proportional drift and loop-closure corrections,
scripted dynamic obstacles, and occlusion events that degrade pose quality.
All randomness comes from counter-based Philox streams keyed off the run
seed, so identical seeds and command streams give bitwise-identical runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .frames import (
    Pose2,
    Pose3,
    Twist2,
    integrate_pose2,
    normalize_angle,
    quat_from_matrix,
)
from .manip import LiftState, lift_step
from .mapping import PointCloud, PoseQuality
from .swerve import ChassisGeometry, ModuleBank, VelocityLimits, clamp_twist

ROBOT_RADIUS = 0.3


@dataclass
class Box:
    """Extruded axis-aligned box: footprint center/size plus height."""

    cx: float
    cz: float
    sx: float
    sz: float
    height: float = 1.0

    @property
    def x0(self):
        return self.cx - 0.5 * self.sx

    @property
    def x1(self):
        return self.cx + 0.5 * self.sx

    @property
    def z0(self):
        return self.cz - 0.5 * self.sz

    @property
    def z1(self):
        return self.cz + 0.5 * self.sz

    def distance_to_point(self, x: float, z: float) -> float:
        dx = max(self.x0 - x, 0.0, x - self.x1)
        dz = max(self.z0 - z, 0.0, z - self.z1)
        return math.hypot(dx, dz)


@dataclass
class Walker:
    """Scripted dynamic obstacle: a vertical capsule ping-ponging along its
    waypoint list at constant speed. Position is a pure function of time."""

    speed: float
    radius: float
    waypoints: list[tuple[float, float]]
    height: float = 1.7
    start_time: float = 0.0

    def __post_init__(self):
        self._cum = [0.0]
        for (x0, z0), (x1, z1) in zip(self.waypoints, self.waypoints[1:]):
            self._cum.append(self._cum[-1] + math.hypot(x1 - x0, z1 - z0))

    def position(self, t: float) -> tuple[float, float]:
        if len(self.waypoints) == 1 or self._cum[-1] == 0.0 or self.speed == 0.0:
            return self.waypoints[0]
        total = self._cum[-1]
        u = max(0.0, t - self.start_time) * self.speed % (2.0 * total)
        if u > total:
            u = 2.0 * total - u
        i = 0
        while self._cum[i + 1] < u:
            i += 1
        x0, z0 = self.waypoints[i]
        x1, z1 = self.waypoints[i + 1]
        seg = self._cum[i + 1] - self._cum[i]
        a = (u - self._cum[i]) / seg if seg > 0 else 0.0
        return x0 + a * (x1 - x0), z0 + a * (z1 - z0)


@dataclass
class CameraModel:
    """Pinhole depth camera mounted on the lift top, pitched down."""

    fx: float = 100.0
    fy: float = 100.0
    cx: float = 80.0
    cy: float = 60.0
    width: int = 160
    height: int = 120
    max_range: float = 8.0
    noise_coeff: float = 0.01  # sigma(d) = noise_coeff * d
    pitch_down: float = 0.35
    y_offset: float = 0.12

    def rotation_body(self) -> np.ndarray:
        """Camera-to-body rotation: optical +Z forward pitched down, image
        +X right, +Y down (world Y is up)."""
        cp, sp = math.cos(self.pitch_down), math.sin(self.pitch_down)
        cam_z = np.array([0.0, -sp, cp])
        cam_x = np.array([-1.0, 0.0, 0.0])
        cam_y = np.cross(cam_z, cam_x)
        return np.column_stack([cam_x, cam_y, cam_z])

    def pixel_dirs(self) -> np.ndarray:
        """Unnormalized camera-frame ray directions (z component 1), so the
        ray parameter equals z-depth. Shape (H*W, 3)."""
        us = (np.arange(self.width) + 0.5 - self.cx) / self.fx
        vs = (np.arange(self.height) + 0.5 - self.cy) / self.fy
        xn, yn = np.meshgrid(us, vs)
        return np.stack([xn.ravel(), yn.ravel(), np.ones(xn.size)], axis=1)


@dataclass
class Scene:
    """Declarative world description loaded from a .scene file."""

    bounds: tuple[float, float, float, float] = (0.0, 0.0, 4.0, 4.0)
    cell_size: float = 0.05
    home: Pose2 = field(default_factory=Pose2)
    points: dict[str, tuple[float, float]] = field(default_factory=dict)
    route: list[str] = field(default_factory=list)
    boxes: list[Box] = field(default_factory=list)
    walkers: list[Walker] = field(default_factory=list)
    goal: Pose2 | None = None
    camera: CameraModel = field(default_factory=CameraModel)
    occlusions: list[tuple[float, float]] = field(default_factory=list)
    lift0: float = 0.9
    mark_offset: tuple[float, float, float] = (0.0, 0.25, 0.30)
    seed: int = 0

    def occluded(self, t: float) -> bool:
        return any(t0 <= t < t1 for t0, t1 in self.occlusions)


def parse_scene(text: str) -> Scene:
    """Parse the key-value scene format; unknown keys raise ValueError."""
    scene = Scene()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        key, args = tok[0], tok[1:]
        try:
            if key == "bounds":
                scene.bounds = tuple(float(a) for a in args[:4])
            elif key == "cell":
                scene.cell_size = float(args[0])
            elif key == "home":
                scene.home = Pose2(float(args[0]), float(args[1]), float(args[2]))
            elif key == "point":
                scene.points[args[0]] = (float(args[1]), float(args[2]))
            elif key == "route":
                scene.route = list(args)
            elif key == "box":
                scene.boxes.append(Box(*(float(a) for a in args[:5])))
            elif key == "walker":
                speed, radius = float(args[0]), float(args[1])
                coords = [float(a) for a in args[2:]]
                wps = list(zip(coords[0::2], coords[1::2]))
                scene.walkers.append(Walker(speed, radius, wps))
            elif key == "goal":
                scene.goal = Pose2(float(args[0]), float(args[1]), float(args[2]))
            elif key == "camera":
                scene.camera = replace(
                    scene.camera, pitch_down=float(args[0]), y_offset=float(args[1])
                )
            elif key == "occlusion":
                scene.occlusions.append((float(args[0]), float(args[1])))
            elif key == "lift":
                scene.lift0 = float(args[0])
            elif key == "mark":
                scene.mark_offset = (float(args[0]), float(args[1]), float(args[2]))
            elif key == "seed":
                scene.seed = int(args[0])
            else:
                raise ValueError(f"unknown scene key '{key}'")
        except (IndexError, ValueError) as e:
            raise ValueError(f"scene line {lineno}: {e}") from e
    return scene


def load_scene(path) -> Scene:
    with open(path, "r", encoding="utf-8") as f:
        return parse_scene(f.read())


# --- odometry ----------------------------------------------------------------


@dataclass
class NoiseParams:
    """Random-walk odometry noise: per-step standard deviations scale with
    the square root of the step's travel distance, so accumulated error
    depends only on distance traveled (not on the step size). Defaults are
    calibrated so a 20 m path accumulates about 50 mm RMS terminal error."""

    k_trans: float = 0.008  # m per sqrt(m)
    k_yaw: float = 0.002  # rad per sqrt(m)
    occlusion_factor: float = 2.0


@dataclass
class Keyframe:
    true: Pose2
    est: Pose2


@dataclass
class OdomState:
    est: Pose2
    quality: PoseQuality = field(default_factory=PoseQuality)
    keyframes: list[Keyframe] = field(default_factory=list)
    travel_since_keyframe: float = 0.0


def odometry_step(
    od: OdomState,
    true_prev: Pose2,
    true_new: Pose2,
    noise: NoiseParams,
    rng: np.random.Generator,
    occluded: bool = False,
) -> OdomState:
    """Integrate the true motion increment into the estimate, perturbed by
    zero-mean Gaussian noise; quality degrades (and noise doubles) during
    occlusion events."""
    dx = true_new.x - true_prev.x
    dz = true_new.z - true_prev.z
    dyaw = normalize_angle(true_new.yaw - true_prev.yaw)
    dist = math.hypot(dx, dz)
    od.quality = PoseQuality(good=not occluded)
    if dist == 0.0 and dyaw == 0.0:
        return od
    factor = noise.occlusion_factor if occluded else 1.0
    s = math.sqrt(dist)
    st = noise.k_trans * s * factor
    sy = noise.k_yaw * s * factor
    nx = rng.normal(0.0, st) if st > 0.0 else 0.0
    nz = rng.normal(0.0, st) if st > 0.0 else 0.0
    ny = rng.normal(0.0, sy) if sy > 0.0 else 0.0
    od.est = Pose2(
        od.est.x + dx + nx,
        od.est.z + dz + nz,
        normalize_angle(od.est.yaw + dyaw + ny),
    )
    od.travel_since_keyframe += dist
    return od


def loop_closure_update(
    od: OdomState,
    true_pose: Pose2,
    keyframe_radius: float = 0.5,
    residual: float = 0.1,
) -> OdomState:
    """Shrink the estimate error toward zero when the true pose is within
    keyframe_radius of a stored keyframe. Repeated calls while inside the
    radius contract the error geometrically; the error norm never grows."""
    near = any(
        math.hypot(true_pose.x - kf.true.x, true_pose.z - kf.true.z) <= keyframe_radius
        for kf in od.keyframes
    )
    if not near:
        return od
    od.est = Pose2(
        true_pose.x + residual * (od.est.x - true_pose.x),
        true_pose.z + residual * (od.est.z - true_pose.z),
        normalize_angle(
            true_pose.yaw + residual * normalize_angle(od.est.yaw - true_pose.yaw)
        ),
    )
    return od


class OdometryModel:
    """Drift + loop-closure odometry stand-in for the visual-inertial
    tracker. Keyframes are recorded every keyframe_spacing meters of travel
    when no existing keyframe is nearby; closure corrections fire whenever
    the robot is within keyframe_radius of a stored keyframe."""

    def __init__(
        self,
        start: Pose2,
        noise: NoiseParams | None = None,
        rng: np.random.Generator | None = None,
        closure_enabled: bool = True,
        keyframe_spacing: float = 1.0,
        keyframe_radius: float = 0.5,
        residual: float = 0.1,
        closure_min_travel: float = 0.1,
    ):
        self.state = OdomState(est=Pose2(start.x, start.z, start.yaw))
        self.noise = noise or NoiseParams()
        self.rng = rng if rng is not None else np.random.Generator(np.random.Philox(0))
        self.closure_enabled = closure_enabled
        self.keyframe_spacing = keyframe_spacing
        self.keyframe_radius = keyframe_radius
        self.residual = residual
        # corrections fire at most once per this much travel, so residual
        # drift accumulated between firings survives (no estimate snapping)
        self.closure_min_travel = closure_min_travel
        self._travel_since_closure = math.inf
        self.state.keyframes.append(Keyframe(Pose2(start.x, start.z, start.yaw), self.state.est))

    def update(self, true_prev: Pose2, true_new: Pose2, occluded: bool) -> OdomState:
        dist = math.hypot(true_new.x - true_prev.x, true_new.z - true_prev.z)
        od = odometry_step(self.state, true_prev, true_new, self.noise, self.rng, occluded)
        if od.travel_since_keyframe >= self.keyframe_spacing:
            near = any(
                math.hypot(true_new.x - kf.true.x, true_new.z - kf.true.z)
                <= self.keyframe_radius
                for kf in od.keyframes
            )
            if not near:
                od.keyframes.append(
                    Keyframe(Pose2(true_new.x, true_new.z, true_new.yaw), od.est)
                )
            od.travel_since_keyframe = 0.0
        self._travel_since_closure += dist
        near = any(
            math.hypot(true_new.x - kf.true.x, true_new.z - kf.true.z)
            <= self.keyframe_radius
            for kf in od.keyframes
        )
        if self.closure_enabled and near and self._travel_since_closure >= self.closure_min_travel:
            loop_closure_update(od, true_new, self.keyframe_radius, self.residual)
            self._travel_since_closure = 0.0
        return od


# --- world -------------------------------------------------------------------


@dataclass(frozen=True)
class WorldState:
    """Immutable ground-truth snapshot; stepping never mutates past states."""

    t: float
    base: Pose2
    lift: LiftState
    ee_offset: Pose3
    collided: bool
    collision_count: int
    rng_draws: int


class Simulator:
    """Single-owner world stepper.

    The base command passes through the swerve IK, per-module steering-rate
    and drive-acceleration limits, and the forward kinematics, so infeasible
    twists are attenuated exactly as the modules dictate. Collisions freeze
    base motion and stop the drives.
    """

    def __init__(
        self,
        scene: Scene,
        seed: int | None = None,
        limits: VelocityLimits | None = None,
        geometry: ChassisGeometry | None = None,
        noise: NoiseParams | None = None,
        dt: float = 0.005,
    ):
        if not (0.0 < dt <= 0.05):
            raise ValueError("dt must be in (0, 0.05]")
        self.scene = scene
        self.dt = dt
        self.seed = scene.seed if seed is None else seed
        self.limits = limits or VelocityLimits()
        self.geometry = geometry or ChassisGeometry()
        self.noise = noise or NoiseParams()
        self.bank = ModuleBank(self.geometry, self.limits)
        self.depth_rng = np.random.Generator(np.random.Philox(key=self.seed * 4 + 1))
        self.occl_rng = np.random.Generator(np.random.Philox(key=self.seed * 4 + 2))
        self._draws = 0
        mx, my, mz = scene.mark_offset
        self.state = WorldState(
            t=0.0,
            base=Pose2(scene.home.x, scene.home.z, scene.home.yaw),
            lift=LiftState(height=scene.lift0),
            ee_offset=Pose3.from_translation(mx, scene.lift0 + my, mz),
            collided=False,
            collision_count=0,
            rng_draws=0,
        )
        self._pixel_dirs = scene.camera.pixel_dirs()
        self._cam_rot = scene.camera.rotation_body()

    def odometry_rng(self) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(key=self.seed * 4 + 3))

    # -- stepping --------------------------------------------------------

    def _collides(self, x: float, z: float, t: float) -> bool:
        for box in self.scene.boxes:
            if box.distance_to_point(x, z) <= ROBOT_RADIUS:
                return True
        for wk in self.scene.walkers:
            wx, wz = wk.position(t)
            if math.hypot(x - wx, z - wz) <= ROBOT_RADIUS + wk.radius:
                return True
        return False

    def step(
        self,
        base_cmd: Twist2,
        lift_velocity: float | None = None,
        lift_target: float | None = None,
        ee_cmd: Pose3 | None = None,
    ) -> WorldState:
        s = self.state
        t_new = s.t + self.dt
        cmd = clamp_twist(base_cmd, self.limits)
        realized = self.bank.step(cmd, self.dt)
        candidate = integrate_pose2(s.base, realized, self.dt)

        collided = self._collides(candidate.x, candidate.z, t_new)
        if collided:
            base = s.base  # contact: base motion frozen
            for m in self.bank.states:
                m.drive = 0.0
        else:
            base = candidate
        count = s.collision_count + (1 if collided and not s.collided else 0)

        lift = lift_step(s.lift, self.dt, velocity=lift_velocity, target_height=lift_target)
        ee = ee_cmd.copy() if ee_cmd is not None else s.ee_offset

        self.state = WorldState(
            t=t_new,
            base=base,
            lift=lift,
            ee_offset=ee,
            collided=collided,
            collision_count=count,
            rng_draws=self._draws,
        )
        return self.state

    # -- derived poses -----------------------------------------------------

    def base_pose3(self, base: Pose2 | None = None) -> Pose3:
        b = base if base is not None else self.state.base
        return Pose3.from_yaw_xz(b.x, b.z, b.yaw)

    def camera_pose(self, base: Pose2 | None = None, lift_height: float | None = None) -> Pose3:
        """World pose of the depth camera (mounted on the lift top)."""
        h = lift_height if lift_height is not None else self.state.lift.height
        mount = Pose3(
            quat_from_matrix(self._cam_rot),
            np.array([0.0, h + self.scene.camera.y_offset, 0.0]),
        )
        return self.base_pose3(base).compose(mount)

    def ee_world(self) -> Pose3:
        return self.base_pose3().compose(self.state.ee_offset)

    # -- sensors -----------------------------------------------------------

    def render_depth(self, noise: bool = True) -> PointCloud:
        """Per-pixel ray casting against the floor plane, boxes, and walker
        cylinders; depth (camera-frame z) is perturbed by sigma = c * d and
        clipped to max range. During occlusion events at most 10% of pixels
        return."""
        cam = self.scene.camera
        pose = self.camera_pose()
        from .frames import quat_to_matrix

        rot = quat_to_matrix(pose.q)
        origin = pose.t
        dirs = self._pixel_dirs @ rot.T  # world-frame, z-depth parameterized
        n = len(dirs)
        depth = np.full(n, np.inf)

        dy = dirs[:, 1]
        with np.errstate(divide="ignore", invalid="ignore"):
            s_floor = np.where(dy < 0.0, -origin[1] / dy, np.inf)
        depth = np.minimum(depth, np.where(s_floor > 0.0, s_floor, np.inf))

        for box in self.scene.boxes:
            lo = np.array([box.x0, 0.0, box.z0])
            hi = np.array([box.x1, box.height, box.z1])
            with np.errstate(divide="ignore", invalid="ignore"):
                inv = 1.0 / dirs
                t0 = (lo - origin) * inv
                t1 = (hi - origin) * inv
            tmin = np.minimum(t0, t1).max(axis=1)
            tmax = np.maximum(t0, t1).min(axis=1)
            hit = (tmax >= tmin) & (tmax > 0.0)
            s_box = np.where(tmin > 0.0, tmin, tmax)
            depth = np.minimum(depth, np.where(hit & (s_box > 0.0), s_box, np.inf))

        for wk in self.scene.walkers:
            wx, wz = wk.position(self.state.t)
            ox, oz = origin[0] - wx, origin[2] - wz
            a = dirs[:, 0] ** 2 + dirs[:, 2] ** 2
            b = 2.0 * (ox * dirs[:, 0] + oz * dirs[:, 2])
            c = ox * ox + oz * oz - wk.radius**2
            disc = b * b - 4.0 * a * c
            with np.errstate(divide="ignore", invalid="ignore"):
                sq = np.sqrt(np.maximum(disc, 0.0))
                s1 = (-b - sq) / (2.0 * a)
                s2 = (-b + sq) / (2.0 * a)
            s_cyl = np.where(s1 > 0.0, s1, s2)
            y_hit = origin[1] + s_cyl * dirs[:, 1]
            ok = (disc > 0.0) & (s_cyl > 0.0) & (y_hit >= 0.0) & (y_hit <= wk.height)
            depth = np.minimum(depth, np.where(ok, s_cyl, np.inf))

        valid = np.isfinite(depth) & (depth > 0.05)
        if noise and cam.noise_coeff > 0.0:
            sigma = cam.noise_coeff * np.where(valid, depth, 0.0)
            depth = depth + self.depth_rng.normal(0.0, 1.0, n) * sigma
            self._draws += 1
        valid &= depth <= cam.max_range
        if self.scene.occluded(self.state.t):
            keep = self.occl_rng.random(n) < 0.1
            self._draws += 1
            valid &= keep
        pts = self._pixel_dirs[valid] * depth[valid, None]
        return PointCloud(pts, self.state.t)
