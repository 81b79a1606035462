"""Swerve-drive kinematics: inverse/forward maps, shortest-turn module
optimization, and velocity clamping.

The module velocity stack orders Cartesian components as
[vx1..vx4, vy1..vy4] for modules (FL, FR, RR, RL). The coupling matrix is
equivalent to the rigid-body relation v_i = v + omega x r_i at corner
positions (+-L, -+W) in body (forward, lateral) coordinates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .frames import Twist2, normalize_angle

MODULE_NAMES = ("FL", "FR", "RR", "RL")


@dataclass(frozen=True)
class ChassisGeometry:
    """Half-width W and half-length L of the module rectangle, meters."""

    half_width: float = 0.152
    half_length: float = 0.106

    def coupling(self) -> np.ndarray:
        """8x3 matrix mapping [vx, vy, omega] to stacked module velocities."""
        w, l = self.half_width, self.half_length
        return np.array(
            [
                [1.0, 0.0, w],
                [1.0, 0.0, -w],
                [1.0, 0.0, -w],
                [1.0, 0.0, w],
                [0.0, 1.0, l],
                [0.0, 1.0, l],
                [0.0, 1.0, -l],
                [0.0, 1.0, -l],
            ]
        )


@dataclass
class ModuleState:
    """One swerve module: steering angle (rad, in (-pi, pi]) and signed wheel speed (m/s)."""

    steer: float = 0.0
    drive: float = 0.0


@dataclass
class VelocityLimits:
    """Safety limits applied to chassis twists and module dynamics."""

    v_max: float = 0.25
    omega_max: float = 1.0
    steer_rate_max: float = 10.0
    drive_accel_max: float = 2.5


def inverse_kinematics(
    twist: Twist2,
    geom: ChassisGeometry,
    previous: list[ModuleState] | None = None,
) -> list[ModuleState]:
    """Map a chassis twist to per-module (steer, drive) setpoints.

    A module whose Cartesian velocity is exactly zero keeps its previous
    steering angle (zero if no previous state is given) and drives at 0,
    avoiding the atan2(0, 0) indeterminacy.
    """
    vx, vy, om = twist.vx, twist.vy, twist.omega
    w, l = geom.half_width, geom.half_length
    vxs = (vx + om * w, vx - om * w, vx - om * w, vx + om * w)
    vys = (vy + om * l, vy + om * l, vy - om * l, vy - om * l)
    out = []
    for i in range(4):
        mvx, mvy = vxs[i], vys[i]
        speed = math.hypot(mvx, mvy)
        if speed == 0.0:
            steer = previous[i].steer if previous is not None else 0.0
            out.append(ModuleState(steer, 0.0))
        else:
            out.append(ModuleState(math.atan2(mvy, mvx), speed))
    return out


def optimize_module(current_steer: float, target: ModuleState) -> ModuleState:
    """Shortest-turn optimization: if reaching the target steering angle
    needs a rotation greater than 90 degrees, steer to the opposite angle
    and reverse the drive direction. Exactly 90 degrees does not flip."""
    delta = normalize_angle(target.steer - current_steer)
    if abs(delta) > 0.5 * math.pi:
        return ModuleState(normalize_angle(target.steer + math.pi), -target.drive)
    return ModuleState(normalize_angle(target.steer), target.drive)


def forward_kinematics(states: list[ModuleState], geom: ChassisGeometry) -> Twist2:
    """Least-squares chassis twist from four module states.

    For states produced by inverse_kinematics this is an exact inverse; for
    inconsistent states it solves the normal equations of the coupling
    matrix, which decouple into simple means.
    """
    vxs = [s.drive * math.cos(s.steer) for s in states]
    vys = [s.drive * math.sin(s.steer) for s in states]
    w, l = geom.half_width, geom.half_length
    vx = 0.25 * sum(vxs)
    vy = 0.25 * sum(vys)
    om = (
        w * (vxs[0] - vxs[1] - vxs[2] + vxs[3])
        + l * (vys[0] + vys[1] - vys[2] - vys[3])
    ) / (4.0 * (w * w + l * l))
    return Twist2(vx, vy, om)


def clamp_twist(twist: Twist2, limits: VelocityLimits) -> Twist2:
    """Clamp translational speed (uniform scaling, direction preserved) and
    rotational rate (independent) to the given limits."""
    vx, vy = twist.vx, twist.vy
    n = math.hypot(vx, vy)
    if n > limits.v_max:
        s = limits.v_max / n
        vx *= s
        vy *= s
    om = min(max(twist.omega, -limits.omega_max), limits.omega_max)
    return Twist2(vx, vy, om)


@dataclass
class ModuleBank:
    """Rate-limited module states, stepped toward optimized IK targets.

    Owned by a single control or simulation task; applies the shortest-turn
    optimization against each module's current steering angle, then limits
    steering rate and drive acceleration per step.
    """

    geom: ChassisGeometry = field(default_factory=ChassisGeometry)
    limits: VelocityLimits = field(default_factory=VelocityLimits)
    states: list[ModuleState] = field(
        default_factory=lambda: [ModuleState() for _ in range(4)]
    )

    def step(self, twist: Twist2, dt: float) -> Twist2:
        """Advance module states toward the twist's IK targets; return the
        chassis twist actually realized by the limited modules."""
        targets = inverse_kinematics(twist, self.geom, self.states)
        max_dsteer = self.limits.steer_rate_max * dt
        max_dv = self.limits.drive_accel_max * dt
        for cur, tgt in zip(self.states, targets):
            opt = optimize_module(cur.steer, tgt)
            dsteer = normalize_angle(opt.steer - cur.steer)
            cur.steer = normalize_angle(
                cur.steer + min(max(dsteer, -max_dsteer), max_dsteer)
            )
            dv = opt.drive - cur.drive
            cur.drive += min(max(dv, -max_dv), max_dv)
        return forward_kinematics(self.states, self.geom)
