"""Base tracking controllers: EMA command filtering, position/yaw PID,
holonomic pure-pursuit path tracking, and the two-stage docking procedure.

All controllers run at 50 Hz and emit body-frame twists which the caller
passes through the final safety clamp and the EMA filter before kinematics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .frames import Pose2, Twist2, normalize_angle, world_to_body
from .swerve import VelocityLimits, clamp_twist

CONTROL_RATE_HZ = 50.0


@dataclass
class EmaFilter:
    """Exponential moving average v_filt = (1 - alpha) * cmd + alpha * prev."""

    alpha: float = 0.2
    prev: Twist2 = field(default_factory=Twist2)

    def step(self, cmd: Twist2) -> Twist2:
        a = self.alpha
        out = Twist2(
            (1.0 - a) * cmd.vx + a * self.prev.vx,
            (1.0 - a) * cmd.vy + a * self.prev.vy,
            (1.0 - a) * cmd.omega + a * self.prev.omega,
        )
        self.prev = out
        return out

    def reset(self) -> None:
        self.prev = Twist2()


@dataclass
class PidGains:
    """Position and yaw PID gains plus tolerances and saturation levels."""

    pos_kp: float = 1.5
    pos_ki: float = 0.02
    pos_kd: float = 0.15
    yaw_kp: float = 2.1
    yaw_ki: float = 0.01
    yaw_kd: float = 0.2
    pos_tol: float = 0.015
    yaw_tol: float = 0.03
    # controller-internal saturation; the final safety clamp is tighter
    v_sat: float = 0.35
    omega_sat: float = 1.0
    integral_clamp_pos: float = 0.5
    integral_clamp_yaw: float = 0.5


class PoseController:
    """World-frame position + yaw PID emitting body twists.

    The error is computed in the world frame and the resulting velocity is
    rotated into the robot frame at output. Derivative acts on the
    measurement (no setpoint kick); the integral is clamped for anti-windup
    and updated after the output, so the first step is purely proportional.
    """

    def __init__(self, gains: PidGains | None = None, limits: VelocityLimits | None = None):
        self.gains = gains or PidGains()
        self.limits = limits or VelocityLimits()
        self.reset()

    def reset(self) -> None:
        self._int_x = 0.0
        self._int_z = 0.0
        self._int_yaw = 0.0
        self._prev_meas: Pose2 | None = None

    def step(self, est: Pose2, target: Pose2, dt: float) -> tuple[Twist2, bool]:
        g = self.gains
        ex = target.x - est.x
        ez = target.z - est.z
        eyaw = normalize_angle(target.yaw - est.yaw)

        if self._prev_meas is None:
            dmx = dmz = dmyaw = 0.0
        else:
            dmx = (est.x - self._prev_meas.x) / dt
            dmz = (est.z - self._prev_meas.z) / dt
            dmyaw = normalize_angle(est.yaw - self._prev_meas.yaw) / dt
        self._prev_meas = Pose2(est.x, est.z, est.yaw)

        ux = g.pos_kp * ex + g.pos_ki * self._int_x - g.pos_kd * dmx
        uz = g.pos_kp * ez + g.pos_ki * self._int_z - g.pos_kd * dmz
        uyaw = g.yaw_kp * eyaw + g.yaw_ki * self._int_yaw - g.yaw_kd * dmyaw

        n = math.hypot(ux, uz)
        if n > g.v_sat:
            s = g.v_sat / n
            ux *= s
            uz *= s
        uyaw = min(max(uyaw, -g.omega_sat), g.omega_sat)

        self._int_x += ex * dt
        self._int_z += ez * dt
        ni = math.hypot(self._int_x, self._int_z)
        if ni > g.integral_clamp_pos:
            s = g.integral_clamp_pos / ni
            self._int_x *= s
            self._int_z *= s
        self._int_yaw += eyaw * dt
        self._int_yaw = min(
            max(self._int_yaw, -g.integral_clamp_yaw), g.integral_clamp_yaw
        )

        vx, vy = world_to_body(est.yaw, ux, uz)
        twist = clamp_twist(Twist2(vx, vy, uyaw), self.limits)
        done = math.hypot(ex, ez) <= g.pos_tol and abs(eyaw) <= g.yaw_tol
        return twist, done


@dataclass
class PursuitParams:
    """Adaptive look-ahead range, cruise speed, and goal tolerance."""

    lookahead_min: float = 0.2
    lookahead_max: float = 0.4
    cruise_speed: float = 0.25
    goal_tol: float = 0.02


class PathTracker:
    """Holonomic pure pursuit: selects a look-ahead point along the path
    and lets the PID produce the twist toward it, with the yaw target set
    to the local path tangent.

    The look-ahead distance grows linearly with current speed over
    [lookahead_min, lookahead_max]. Done when within goal_tol of the final
    waypoint.
    """

    def __init__(
        self,
        waypoints: list[tuple[float, float]],
        params: PursuitParams | None = None,
        gains: PidGains | None = None,
        limits: VelocityLimits | None = None,
    ):
        if not waypoints:
            raise ValueError("no path")
        self.params = params or PursuitParams()
        limits = limits or VelocityLimits()
        limits = VelocityLimits(
            v_max=min(limits.v_max, self.params.cruise_speed),
            omega_max=limits.omega_max,
            steer_rate_max=limits.steer_rate_max,
            drive_accel_max=limits.drive_accel_max,
        )
        self.pid = PoseController(gains, limits)
        self.waypoints = [(float(x), float(z)) for x, z in waypoints]
        self._cum = [0.0]
        for (x0, z0), (x1, z1) in zip(self.waypoints, self.waypoints[1:]):
            self._cum.append(self._cum[-1] + math.hypot(x1 - x0, z1 - z0))
        self.progress_index = 0

    def _closest_arc(self, x: float, z: float) -> float:
        """Arc length of the closest point on the polyline to (x, z)."""
        best_d2 = float("inf")
        best_s = 0.0
        best_i = 0
        pts = self.waypoints
        if len(pts) == 1:
            return 0.0
        for i in range(len(pts) - 1):
            x0, z0 = pts[i]
            x1, z1 = pts[i + 1]
            dx, dz = x1 - x0, z1 - z0
            seg2 = dx * dx + dz * dz
            if seg2 == 0.0:
                t = 0.0
            else:
                t = min(1.0, max(0.0, ((x - x0) * dx + (z - z0) * dz) / seg2))
            px, pz = x0 + t * dx, z0 + t * dz
            d2 = (x - px) ** 2 + (z - pz) ** 2
            if d2 < best_d2:
                best_d2 = d2
                best_s = self._cum[i] + t * math.sqrt(seg2)
                best_i = i
        self.progress_index = max(self.progress_index, best_i)
        return best_s

    def _point_at(self, s: float) -> tuple[float, float, float, float]:
        """Point and unit tangent at arc length s (clamped to the path)."""
        pts = self.waypoints
        cum = self._cum
        if s >= cum[-1] or len(pts) == 1:
            x1, z1 = pts[-1]
            if len(pts) == 1:
                return x1, z1, 0.0, 1.0
            x0, z0 = pts[-2]
            seg = math.hypot(x1 - x0, z1 - z0)
            return x1, z1, (x1 - x0) / seg, (z1 - z0) / seg
        i = 0
        while cum[i + 1] < s:
            i += 1
        x0, z0 = pts[i]
        x1, z1 = pts[i + 1]
        seg = cum[i + 1] - cum[i]
        t = (s - cum[i]) / seg if seg > 0 else 0.0
        return (
            x0 + t * (x1 - x0),
            z0 + t * (z1 - z0),
            (x1 - x0) / seg,
            (z1 - z0) / seg,
        )

    def lookahead_distance(self, current_speed: float) -> float:
        p = self.params
        frac = min(1.0, max(0.0, current_speed / p.cruise_speed))
        return p.lookahead_min + (p.lookahead_max - p.lookahead_min) * frac

    def step(self, est: Pose2, current_speed: float, dt: float) -> tuple[Twist2, bool]:
        gx, gz = self.waypoints[-1]
        if math.hypot(est.x - gx, est.z - gz) <= self.params.goal_tol:
            return Twist2(), True
        s = self._closest_arc(est.x, est.z)
        la = self.lookahead_distance(current_speed)
        tx, tz, tanx, tanz = self._point_at(s + la)
        target_yaw = math.atan2(tanx, tanz)
        twist, _ = self.pid.step(est, Pose2(tx, tz, target_yaw), dt)
        return twist, False


class DockTimeout(RuntimeError):
    """Raised when a docking stage exceeds its time budget; carries the
    partial drift metrics measured so far."""

    def __init__(self, stage: int, drift: tuple[float, float], yaw_error: float):
        super().__init__(f"docking stage {stage} timed out")
        self.stage = stage
        self.drift = drift
        self.yaw_error = yaw_error


@dataclass
class DockResult:
    drift: tuple[float, float]
    yaw_error: float
    duration: float


class DockingController:
    """Two-stage docking: an absolute move_to(x, z, psi) gated on a 2 cm
    translational tolerance, then in-place heading alignment to 0.04 rad.

    Each stage completes after its tolerance has held for settle_time of
    simulated time; the PID keeps regulating the full pose throughout, so
    the residual error at completion is well below the stage tolerances.
    Reports end-of-loop drift (dx, dz) and yaw error against the saved
    home pose on completion.
    """

    STAGE_MOVE = 1
    STAGE_ALIGN = 2

    def __init__(
        self,
        home: Pose2,
        gains: PidGains | None = None,
        limits: VelocityLimits | None = None,
        trans_tol: float = 0.02,
        yaw_tol: float = 0.04,
        settle_time: float = 0.75,
        stage_timeout: float = 30.0,
    ):
        self.home = home
        self.pid = PoseController(gains, limits)
        self.trans_tol = trans_tol
        self.yaw_tol = yaw_tol
        self.settle_time = settle_time
        self.stage_timeout = stage_timeout
        self.stage = self.STAGE_MOVE
        self._stage_t = 0.0
        self._settled = 0.0
        self._elapsed = 0.0
        self.result: DockResult | None = None

    def _drift(self, est: Pose2) -> tuple[tuple[float, float], float]:
        return (
            (est.x - self.home.x, est.z - self.home.z),
            normalize_angle(est.yaw - self.home.yaw),
        )

    def step(self, est: Pose2, dt: float) -> tuple[Twist2, bool]:
        if self.result is not None:
            return Twist2(), True
        self._stage_t += dt
        self._elapsed += dt
        drift, yaw_err = self._drift(est)
        if self._stage_t > self.stage_timeout:
            raise DockTimeout(self.stage, drift, yaw_err)

        twist, _ = self.pid.step(est, self.home, dt)
        pos_err = math.hypot(*drift)
        if self.stage == self.STAGE_MOVE:
            within = pos_err <= self.trans_tol
        else:
            within = pos_err <= self.trans_tol and abs(yaw_err) <= self.yaw_tol
        self._settled = self._settled + dt if within else 0.0

        if self._settled >= self.settle_time:
            if self.stage == self.STAGE_MOVE:
                self.stage = self.STAGE_ALIGN
                self._stage_t = 0.0
                self._settled = 0.0
            else:
                self.result = DockResult(drift, yaw_err, self._elapsed)
                return Twist2(), True
        return twist, False
