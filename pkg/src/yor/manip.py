"""Arm and lift control: joint stiffness torque law, velocity/acceleration
limited command shaping, lift closed-loop stepping, and world-frame
end-effector holding with exponential/SLERP smoothing.

The 200 Hz shaping/stiffness layer owns arm state; the 120 Hz EE-hold loop
reads the latest cached base pose and sends pose targets to the arm.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .frames import Pose3, slerp, smooth_step_alpha

LIFT_MIN = 0.60
LIFT_MAX = 1.24
LIFT_VMAX = 0.035


@dataclass
class JointState:
    q: np.ndarray
    qd: np.ndarray

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float)
        self.qd = np.asarray(self.qd, dtype=float)
        if self.q.shape != self.qd.shape:
            raise ValueError("q and qd must have matching lengths")


@dataclass
class StiffnessGains:
    """Diagonal joint stiffness and damping."""

    kp: np.ndarray
    kd: np.ndarray

    def __post_init__(self):
        self.kp = np.asarray(self.kp, dtype=float)
        self.kd = np.asarray(self.kd, dtype=float)


def stiffness_torque(
    state: JointState, ref: JointState, gains: StiffnessGains, gravity
) -> np.ndarray:
    """tau = tau_g(q) + Kp (q_ref - q) + Kd (qd_ref - qd).

    Gravity feedforward lets low stiffness gains hold posture, so the arm
    behaves as a compliant spring-damper around the reference.
    """
    if state.q.shape != ref.q.shape or gains.kp.shape != state.q.shape:
        raise ValueError("joint dimension mismatch")
    return (
        np.asarray(gravity(state.q), dtype=float)
        + gains.kp * (ref.q - state.q)
        + gains.kd * (ref.qd - state.qd)
    )


@dataclass
class ShaperLimits:
    max_velocity: float = 1.0
    max_acceleration: float = 10.0


def shape_command(
    current: JointState, target_q, limits: ShaperLimits, dt: float
) -> JointState:
    """One 200 Hz step of the trapezoidal command shaper.

    Per joint the setpoint velocity obeys |v| <= max_velocity and
    |dv| <= max_acceleration * dt, with a discrete-time braking bound so a
    stationary target is never overshot; once reachable within a step the
    setpoint snaps exactly onto the target.
    """
    target_q = np.asarray(target_q, dtype=float)
    q, v = current.q.copy(), current.qd.copy()
    a = limits.max_acceleration
    vmax = limits.max_velocity
    dq = target_q - q

    # max speed from which the remaining distance can still be covered
    # while decelerating in discrete steps of a*dt
    brake = -0.5 * a * dt + np.sqrt(0.25 * a * a * dt * dt + 2.0 * a * np.abs(dq))
    v_des = np.sign(dq) * np.minimum(vmax, brake)

    # snap when the target is reachable this step within both limits
    v_need = dq / dt
    snap_v = min(a * dt, vmax)
    snap = (np.abs(v_need) <= snap_v) & (np.abs(v_need - v) <= a * dt)
    v_new = np.clip(v_des, v - a * dt, v + a * dt)
    v_new = np.where(snap, v_need, v_new)
    q_new = np.where(snap, target_q, q + v_new * dt)
    return JointState(q_new, v_new)


@dataclass(frozen=True)
class LiftState:
    """Lift carriage height and velocity; bounds are unconditional."""

    height: float = 0.9
    velocity: float = 0.0


def lift_step(
    state: LiftState,
    dt: float,
    velocity: float | None = None,
    target_height: float | None = None,
) -> LiftState:
    """Advance the lift by one step under a velocity or height command.

    Velocity is clamped to +-35 mm/s and height to the physical stroke.
    A zero (or absent) command holds position exactly: the lift mechanism
    is self-locking.
    """
    if velocity is None and target_height is None:
        return replace(state, velocity=0.0)
    if target_height is not None:
        velocity = (target_height - state.height) / dt
    v = min(max(velocity, -LIFT_VMAX), LIFT_VMAX)
    if v == 0.0:
        return replace(state, velocity=0.0)
    new_h = min(max(state.height + v * dt, LIFT_MIN), LIFT_MAX)
    realized = (new_h - state.height) / dt
    return LiftState(new_h, realized)


def ee_hold_target(T_WB0: Pose3, T_BE0: Pose3, T_WB_t: Pose3) -> Pose3:
    """Commanded EE pose in the base frame keeping the initial world-frame
    EE pose invariant under base motion: inv(T_WB_t) * T_WB0 * T_BE0."""
    return T_WB_t.inverse().compose(T_WB0).compose(T_BE0)


def smooth_pose(
    prev_cmd: Pose3,
    new_cmd: Pose3,
    dt: float,
    tau_trans: float = 0.20,
    tau_rot: float = 0.30,
) -> Pose3:
    """Exponential low-pass on translation and SLERP smoothing on rotation,
    both with blending coefficient alpha = 1 - exp(-dt/tau)."""
    a_t = smooth_step_alpha(dt, tau_trans)
    a_r = smooth_step_alpha(dt, tau_rot)
    t = prev_cmd.t + a_t * (new_cmd.t - prev_cmd.t)
    q = slerp(prev_cmd.q, new_cmd.q, a_r)
    return Pose3(q, t)


class EeHoldController:
    """World-frame end-effector hold.

    Captures the initial world-to-base and base-to-EE transforms; each tick
    takes the latest cached base pose sample and returns the base-frame EE
    command that keeps the EE's world pose fixed. Smoothing is applied to
    the held world-frame target (constant during a hold), not to the moving
    base-frame command, so it suppresses target jitter without introducing
    a velocity-proportional compensation lag.
    """

    def __init__(
        self,
        T_WB0: Pose3,
        T_BE0: Pose3,
        tau_trans: float = 0.20,
        tau_rot: float = 0.30,
        smoothing: bool = True,
    ):
        self.T_WB0 = T_WB0.copy()
        self.T_BE0 = T_BE0.copy()
        self.world_target = T_WB0.compose(T_BE0)
        self._smoothed = self.world_target.copy()
        self.tau_trans = tau_trans
        self.tau_rot = tau_rot
        self.smoothing = smoothing

    def set_world_target(self, pose: Pose3) -> None:
        self.world_target = pose.copy()

    def update(self, base_pose_sample: Pose3, dt: float) -> Pose3:
        if self.smoothing:
            self._smoothed = smooth_pose(
                self._smoothed, self.world_target, dt, self.tau_trans, self.tau_rot
            )
            tgt = self._smoothed
        else:
            tgt = self.world_target
        return base_pose_sample.inverse().compose(tgt)


@dataclass
class TwoLinkArm:
    """Planar 2-link testbed with point masses at the link ends.

    Used to validate the stiffness law: the plant integrates diagonal-
    inertia dynamics against the same closed-form gravity model the
    controller feeds forward.
    """

    l1: float = 0.3
    l2: float = 0.25
    m1: float = 1.2
    m2: float = 0.8
    g: float = 9.81
    inertia: tuple[float, float] = (0.5, 0.2)

    def gravity(self, q: np.ndarray) -> np.ndarray:
        q1, q2 = q
        c1 = math.cos(q1)
        c12 = math.cos(q1 + q2)
        t2 = self.g * self.m2 * self.l2 * c12
        t1 = self.g * (self.m1 + self.m2) * self.l1 * c1 + t2
        return np.array([t1, t2])

    def step(self, state: JointState, tau: np.ndarray, dt: float,
             tau_ext: np.ndarray | None = None) -> JointState:
        ext = tau_ext if tau_ext is not None else 0.0
        qdd = (np.asarray(tau) + ext - self.gravity(state.q)) / np.asarray(self.inertia)
        qd = state.qd + qdd * dt
        return JointState(state.q + qd * dt, qd)

    def settle(
        self,
        state: JointState,
        ref: JointState,
        gains: StiffnessGains,
        tau_ext: np.ndarray,
        dt: float = 0.005,
        duration: float = 8.0,
    ) -> JointState:
        """Integrate the closed loop under constant external torque until
        near rest; returns the final state."""
        steps = int(round(duration / dt))
        for _ in range(steps):
            tau = stiffness_torque(state, ref, gains, self.gravity)
            state = self.step(state, tau, dt, tau_ext)
        return state
