"""Run configuration: parameter-table defaults plus key-value file overrides.

Config files are plain text, one `key value` pair per line, `#` comments.
Every default below can be overridden.
"""

from __future__ import annotations

from .base_control import PidGains, PursuitParams
from .planner import PlannerParams
from .sim import NoiseParams
from .swerve import VelocityLimits

DEFAULTS: dict[str, float | int | bool] = {
    # mapping
    "mapping.voxel_size": 0.02,
    "mapping.outlier_radius": 0.12,
    "mapping.outlier_neighbors": 3,
    "mapping.floor_band": 0.1,
    "mapping.floor_alpha": 0.2,
    # occupancy grid
    "grid.cell_size": 0.05,
    "grid.floor_band": 0.25,
    "grid.inflation_radius": 0.3,
    "grid.soft_band": 0.2,
    "grid.robot_height": 1.5,
    "grid.fuse_lambda": 0.5,
    # pure pursuit
    "pursuit.lookahead_min": 0.2,
    "pursuit.lookahead_max": 0.4,
    "pursuit.goal_tol": 0.02,
    "pursuit.cruise_speed": 0.25,
    # base velocity filtering and PID
    "base.ema_alpha": 0.2,
    "pid.pos_kp": 1.5,
    "pid.pos_ki": 0.02,
    "pid.pos_kd": 0.15,
    "pid.yaw_kp": 2.1,
    "pid.yaw_ki": 0.01,
    "pid.yaw_kd": 0.2,
    "pid.pos_tol": 0.015,
    "pid.yaw_tol": 0.03,
    "pid.v_sat": 0.35,
    "pid.omega_sat": 1.0,
    # safety clamp and module dynamics
    "safety.v_max": 0.25,
    "safety.omega_max": 1.0,
    "safety.steer_rate_max": 10.0,
    "safety.drive_accel_max": 2.5,
    # docking
    "dock.trans_tol": 0.02,
    "dock.yaw_tol": 0.04,
    "dock.settle_time": 0.75,
    "dock.stage_timeout": 30.0,
    # planner
    "planner.weight": 1.2,
    "planner.beta": 0.015625,
    "planner.avoid_unknown": 0,
    # odometry noise / loop closure
    "odom.k_trans": 0.008,
    "odom.k_yaw": 0.002,
    "odom.occlusion_factor": 2.0,
    "odom.keyframe_spacing": 1.0,
    "odom.keyframe_radius": 0.5,
    "odom.residual": 0.1,
    "odom.closure_min_travel": 0.1,
    # scenario knobs
    "sim.dt": 0.005,
    "tally.loops": 10,
    "tally.loop_closure": 1,
    "wholebody.move_distance": 0.4,
    "wholebody.latency_frames": 1,
    "wholebody.smoothing": 1,
    "wholebody.tau_trans": 0.20,
    "wholebody.tau_rot": 0.30,
    "obstacle.timeout": 90.0,
}


class Config:
    """Typed view over the defaults plus overrides."""

    def __init__(self, overrides: dict | None = None):
        self.values = dict(DEFAULTS)
        if overrides:
            for k, v in overrides.items():
                if k not in self.values:
                    raise KeyError(f"unknown config key '{k}'")
                self.values[k] = v

    def f(self, key: str) -> float:
        return float(self.values[key])

    def i(self, key: str) -> int:
        return int(self.values[key])

    def b(self, key: str) -> bool:
        return bool(int(self.values[key]))

    def limits(self) -> VelocityLimits:
        return VelocityLimits(
            v_max=self.f("safety.v_max"),
            omega_max=self.f("safety.omega_max"),
            steer_rate_max=self.f("safety.steer_rate_max"),
            drive_accel_max=self.f("safety.drive_accel_max"),
        )

    def gains(self) -> PidGains:
        return PidGains(
            pos_kp=self.f("pid.pos_kp"),
            pos_ki=self.f("pid.pos_ki"),
            pos_kd=self.f("pid.pos_kd"),
            yaw_kp=self.f("pid.yaw_kp"),
            yaw_ki=self.f("pid.yaw_ki"),
            yaw_kd=self.f("pid.yaw_kd"),
            pos_tol=self.f("pid.pos_tol"),
            yaw_tol=self.f("pid.yaw_tol"),
            v_sat=self.f("pid.v_sat"),
            omega_sat=self.f("pid.omega_sat"),
        )

    def pursuit(self) -> PursuitParams:
        return PursuitParams(
            lookahead_min=self.f("pursuit.lookahead_min"),
            lookahead_max=self.f("pursuit.lookahead_max"),
            cruise_speed=self.f("pursuit.cruise_speed"),
            goal_tol=self.f("pursuit.goal_tol"),
        )

    def planner(self) -> PlannerParams:
        return PlannerParams(
            weight=self.f("planner.weight"),
            beta=self.f("planner.beta"),
            avoid_unknown=self.b("planner.avoid_unknown"),
        )

    def noise(self) -> NoiseParams:
        return NoiseParams(
            k_trans=self.f("odom.k_trans"),
            k_yaw=self.f("odom.k_yaw"),
            occlusion_factor=self.f("odom.occlusion_factor"),
        )


def parse_config(text: str) -> dict:
    out: dict[str, float] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ValueError(f"config line {lineno}: expected 'key value'")
        out[parts[0]] = float(parts[1])
    return out


def load_config(path: str | None) -> Config:
    if path is None:
        return Config()
    with open(path, "r", encoding="utf-8") as fh:
        return Config(parse_config(fh.read()))
